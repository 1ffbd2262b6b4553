//! Getting commands to entities: either an outbound webhook or the built-in
//! mock log. Webhook posts happen off the command queue, one worker per
//! entity so each entity still sees its commands in order; failures come
//! back as `DELIVERY_FAIL` trace records.

use std::collections::BTreeMap;
use std::time::Duration;

use tokio::sync::mpsc;

use scenl::{Output, TraceRecord};

use crate::session::Command;

pub(crate) struct Delivery {
    webhooks: BTreeMap<String, mpsc::UnboundedSender<Output>>,
    mock: BTreeMap<String, Vec<Output>>,
}

impl Delivery {
    /// Spawns one worker per webhook. Must run inside a Tokio runtime.
    pub(crate) fn new(webhooks: &BTreeMap<String, String>, feedback: mpsc::WeakSender<Command>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(5))
            .build()
            .expect("http client builds");
        let webhooks = webhooks
            .iter()
            .map(|(entity, url)| {
                let (tx, rx) = mpsc::unbounded_channel();
                tokio::spawn(worker(client.clone(), url.clone(), rx, feedback.clone()));
                (entity.clone(), tx)
            })
            .collect();
        Delivery {
            webhooks,
            mock: BTreeMap::new(),
        }
    }

    pub(crate) fn send(&mut self, out: &Output) {
        match self.webhooks.get(out.entity()) {
            Some(tx) => {
                let _ = tx.send(out.clone());
            }
            None => self.mock.entry(out.entity().to_string()).or_default().push(out.clone()),
        }
    }

    pub(crate) fn reset(&mut self) {
        self.mock.clear();
    }

    pub(crate) fn mock_log(&self) -> BTreeMap<String, Vec<Output>> {
        self.mock.clone()
    }
}

async fn worker(
    client: reqwest::Client,
    url: String,
    mut rx: mpsc::UnboundedReceiver<Output>,
    feedback: mpsc::WeakSender<Command>,
) {
    while let Some(out) = rx.recv().await {
        let result = client
            .post(&url)
            .json(&out)
            .send()
            .await
            .and_then(|r| r.error_for_status());
        if let Err(err) = result {
            tracing::warn!(entity = out.entity(), %url, error = %err, "delivery failed");
            let Some(tx) = feedback.upgrade() else { return };
            let _ = tx.send(Command::DeliveryFailed(failure(&out, &err))).await;
        }
    }
}

fn failure(out: &Output, err: &reqwest::Error) -> TraceRecord {
    let (tick, entity, function, branch) = match out {
        Output::Action(c) => (c.issued_at, &c.entity, &c.function, c.branch),
        Output::Cancel(c) => (c.at, &c.entity, &c.function, c.branch),
    };
    let reason = if err.is_timeout() {
        "timeout".to_string()
    } else if err.is_connect() {
        "connection refused".to_string()
    } else if let Some(status) = err.status() {
        format!("http {}", status.as_u16())
    } else {
        err.to_string()
    };
    TraceRecord::DeliveryFail {
        tick,
        entity: entity.clone(),
        function: function.clone(),
        branch,
        reason,
    }
}
