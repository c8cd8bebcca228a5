//! The structured-output gateway: the offline mock, and retry behaviour
//! against a provider that answers badly before it answers well.
//!
//! cargo run -p revtogether --example gateway

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use revtogether::gateway::{ChatRequest, CommentReply, Gateway, Provider, ProviderError};

struct Flaky(AtomicUsize);

impl Provider for Flaky {
    fn chat(&self, _: &ChatRequest) -> Result<String, ProviderError> {
        Ok(match self.0.fetch_add(1, Ordering::SeqCst) {
            0 => "Sure! Here is my comment.".into(),
            1 => r#"{"comment_text":"","sentiment":"positive"}"#.into(),
            _ => "```json\n{\"comment_text\":\"Third time lucky.\",\"sentiment\":\"neutral\"}\n```".into(),
        })
    }
}

fn main() {
    let prompt = "<persona>\nMad Scientist\n</persona>\n<focus>\na tiny squid glows\n</focus>";
    let mock = Gateway::mock();
    let first = mock.complete::<CommentReply>(prompt).expect("mock always validates");
    let second = mock.complete::<CommentReply>(prompt).expect("mock always validates");
    println!("mock: {:?} after {} attempt(s)", first.payload, first.attempts);
    println!("mock is deterministic: {}", first.payload == second.payload);

    let patient = Gateway::new(Arc::new(Flaky(AtomicUsize::new(0))), 2);
    match patient.complete::<CommentReply>(prompt) {
        Ok(reply) => println!("flaky, 2 retries: {:?} after {} attempts", reply.payload, reply.attempts),
        Err(e) => println!("flaky, 2 retries: {e}"),
    }

    let impatient = Gateway::new(Arc::new(Flaky(AtomicUsize::new(0))), 1);
    match impatient.complete::<CommentReply>(prompt) {
        Ok(reply) => println!("flaky, 1 retry: {:?}", reply.payload),
        Err(e) => println!("flaky, 1 retry: {e}"),
    }
}
