use std::sync::{Condvar, Mutex};

use super::{execute_with_timeout, ExecutionResult, Payload, SandboxConfig};

/// Caps the number of sandboxes running at once.
#[derive(Debug)]
pub struct SandboxPool {
    config: SandboxConfig,
    capacity: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

impl SandboxPool {
    pub fn new(config: SandboxConfig, capacity: Option<usize>) -> Self {
        let capacity = capacity
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
            .max(1);
        Self { config, capacity, in_use: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn execute(&self, payload: &Payload) -> ExecutionResult {
        {
            let mut in_use = self.in_use.lock().expect("pool lock");
            while *in_use >= self.capacity {
                in_use = self.freed.wait(in_use).expect("pool lock");
            }
            *in_use += 1;
        }
        let result = execute_with_timeout(payload, &self.config);
        *self.in_use.lock().expect("pool lock") -= 1;
        self.freed.notify_one();
        result
    }
}
