//! In-process publish/subscribe with retained messages, standing in for an
//! MQTT broker. Another transport can be bound by implementing [`Broker`].

use std::collections::HashMap;
use std::sync::Mutex;

use serde_json::Value;
use tokio::sync::broadcast;

const TOPIC_BUFFER: usize = 256;

pub fn plan_topic(session_id: &str) -> String {
    format!("session/{session_id}/plan")
}

pub fn events_topic(session_id: &str) -> String {
    format!("session/{session_id}/events")
}

#[derive(Debug)]
pub struct Subscription {
    /// Last retained message on the topic at subscription time.
    pub retained: Option<Value>,
    pub receiver: broadcast::Receiver<Value>,
}

pub trait Broker: Send + Sync {
    fn publish(&self, topic: &str, payload: Value, retain: bool);
    fn subscribe(&self, topic: &str) -> Subscription;
}

struct Topic {
    sender: broadcast::Sender<Value>,
    retained: Option<Value>,
}

#[derive(Default)]
pub struct TopicBus {
    topics: Mutex<HashMap<String, Topic>>,
}

impl TopicBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn retained(&self, topic: &str) -> Option<Value> {
        let topics = self.topics.lock().unwrap_or_else(|p| p.into_inner());
        topics.get(topic).and_then(|t| t.retained.clone())
    }
}

fn new_topic() -> Topic {
    Topic {
        sender: broadcast::channel(TOPIC_BUFFER).0,
        retained: None,
    }
}

impl Broker for TopicBus {
    fn publish(&self, topic: &str, payload: Value, retain: bool) {
        let mut topics = self.topics.lock().unwrap_or_else(|p| p.into_inner());
        let t = topics.entry(topic.to_string()).or_insert_with(new_topic);
        if retain {
            t.retained = Some(payload.clone());
        }
        // no subscribers is fine
        let _ = t.sender.send(payload);
    }

    fn subscribe(&self, topic: &str) -> Subscription {
        let mut topics = self.topics.lock().unwrap_or_else(|p| p.into_inner());
        let t = topics.entry(topic.to_string()).or_insert_with(new_topic);
        Subscription {
            retained: t.retained.clone(),
            receiver: t.sender.subscribe(),
        }
    }
}
