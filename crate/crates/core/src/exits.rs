//! Exit points: where directed road links leave the danger zone.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{point_in_polygon, segment_polygon_crossings, Point2D, Polygon};
use crate::network::{LinkTarget, RoadNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub id: String,
    pub link_id: String,
    pub offset: f64,
    pub x: f64,
    pub y: f64,
}

impl ExitPoint {
    pub fn location(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }

    pub fn target(&self) -> LinkTarget {
        LinkTarget {
            link_id: self.link_id.clone(),
            offset: self.offset,
        }
    }
}

/// Every inside-to-outside crossing of a link with the zone boundary,
/// sorted by (link id, offset).
///
/// The stretch of link on each side of a crossing is classified by its
/// midpoint; a crossing is an exit when the stretch before it is inside
/// (boundary included) and the stretch after it is outside.
pub fn compute_exits(net: &RoadNetwork, zone: &Polygon) -> Result<Vec<ExitPoint>> {
    let mut order: Vec<usize> = (0..net.links().len()).collect();
    order.sort_by(|&a, &b| net.links()[a].id.cmp(&net.links()[b].id));

    let mut exits = Vec::new();
    for li in order {
        let link = &net.links()[li];
        let (from, to) = net.endpoints(li);
        let a = net.nodes()[from].location();
        let b = net.nodes()[to].location();
        let crossings = segment_polygon_crossings(&a, &b, zone)?;
        let ts: Vec<f64> = crossings.iter().map(|c| c.t).collect();
        let mut k = 0;
        for (i, &t) in ts.iter().enumerate() {
            let prev = if i == 0 { 0.0 } else { ts[i - 1] };
            let next = if i + 1 == ts.len() { 1.0 } else { ts[i + 1] };
            let before = point_in_polygon(&a.lerp(&b, (prev + t) / 2.0), zone);
            let after = point_in_polygon(&a.lerp(&b, (t + next) / 2.0), zone);
            if before && !after {
                let loc = a.lerp(&b, t);
                exits.push(ExitPoint {
                    id: format!("exit-{}-{}", link.id, k),
                    link_id: link.id.clone(),
                    offset: t,
                    x: loc.x,
                    y: loc.y,
                });
                k += 1;
            }
        }
    }
    Ok(exits)
}
