use std::collections::VecDeque;

/// Work-conserving FIFO server with a bounded waiting buffer.
///
/// A unit that reaches an idle server departs immediately and keeps the server
/// busy for `1 / rate` seconds. Units arriving while the server is busy wait in
/// the buffer; an arrival that finds `capacity` units waiting is dropped. The
/// buffer never holds the unit currently being transmitted.
#[derive(Debug, Clone)]
pub struct FifoLink<T> {
    service_time: f64,
    capacity: usize,
    waiting: VecDeque<T>,
    free_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueueEvent<T> {
    Enqueue(T),
    Dequeue,
}

/// What a single [`FifoLink::step`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    /// Time at which the caller must deliver the next `Dequeue`.
    pub next_dequeue: Option<f64>,
    pub departed: Option<T>,
    pub dropped: Option<T>,
}

impl<T> StepOutput<T> {
    fn empty() -> Self {
        Self {
            next_dequeue: None,
            departed: None,
            dropped: None,
        }
    }
}

impl<T> FifoLink<T> {
    pub fn new(rate: f64, capacity: usize) -> Self {
        assert!(rate > 0.0, "link rate must be positive");
        assert!(capacity >= 1, "buffer capacity must be at least 1");
        Self {
            service_time: 1.0 / rate,
            capacity,
            waiting: VecDeque::with_capacity(capacity.min(1 << 16)),
            free_at: f64::NEG_INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn step(&mut self, now: f64, event: QueueEvent<T>) -> StepOutput<T> {
        match event {
            QueueEvent::Enqueue(unit) => self.enqueue(now, unit),
            QueueEvent::Dequeue => self.dequeue(now),
        }
    }

    fn enqueue(&mut self, now: f64, unit: T) -> StepOutput<T> {
        if self.waiting.len() >= self.capacity {
            return StepOutput {
                dropped: Some(unit),
                ..StepOutput::empty()
            };
        }
        let was_empty = self.waiting.is_empty();
        self.waiting.push_back(unit);
        StepOutput {
            next_dequeue: was_empty.then(|| now.max(self.free_at)),
            ..StepOutput::empty()
        }
    }

    fn dequeue(&mut self, now: f64) -> StepOutput<T> {
        // A dequeue against an empty buffer is stale.
        let Some(head) = self.waiting.pop_front() else {
            return StepOutput::empty();
        };
        self.free_at = now + self.service_time;
        StepOutput {
            next_dequeue: (!self.waiting.is_empty()).then_some(self.free_at),
            departed: Some(head),
            dropped: None,
        }
    }
}
