#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use revtogether::clock::SimulatedClock;
use revtogether::gateway::{mock_complete, ChatRequest, Gateway, Provider, ProviderError, Role};
use revtogether::workflow::Workbench;

pub const STORY: &str = "Deep in the ocean, a tiny squid glows. Bacteria living in its light organ \
make the glow. At night the squid hunts in shallow water. Its glow hides its shadow from predators below.";

pub fn mock() -> Gateway {
    Gateway::mock()
}

pub fn bench(text: &str) -> (Workbench, SimulatedClock) {
    let clock = SimulatedClock::starting_at(1_000);
    (Workbench::create("s1", text, Arc::new(clock.clone())), clock)
}

/// Char offsets of the unique occurrence of `needle`.
pub fn span(text: &str, needle: &str) -> (usize, usize) {
    let byte = text.find(needle).expect("needle present");
    assert!(text[byte + 1..].find(needle).is_none(), "needle must be unique");
    let start = text[..byte].chars().count();
    (start, start + needle.chars().count())
}

/// Replays canned replies in order, then falls back to the mock.
pub struct Canned {
    replies: Mutex<Vec<Result<String, ProviderError>>>,
    pub calls: AtomicUsize,
}

impl Canned {
    pub fn new(replies: Vec<Result<String, ProviderError>>) -> Arc<Self> {
        let mut replies = replies;
        replies.reverse();
        Arc::new(Self { replies: Mutex::new(replies), calls: AtomicUsize::new(0) })
    }
}

impl Provider for Canned {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(r) = self.replies.lock().unwrap().pop() {
            return r;
        }
        let prompt = request.messages.iter().find(|m| m.role == Role::User).expect("user message");
        Ok(mock_complete(&prompt.content, request.schema))
    }
}

pub fn canned(replies: Vec<Result<String, ProviderError>>) -> (Gateway, Arc<Canned>) {
    let p = Canned::new(replies);
    (Gateway::new(p.clone(), 3), p)
}
