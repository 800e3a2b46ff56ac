//! Reusable barrier for the per-multiply rendezvous points.
//!
//! Waiters park on their own thread handle and the last arrival unparks
//! them one by one, so a release wakes each waiter exactly once (a condvar
//! broadcast would make them all fight over its mutex). When there are at
//! least as many cores as parties, waiters first poll for a short budget.
//! With fewer cores polling only steals the core from threads that still
//! have work, so they park straight away.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread::{self, Thread};
use std::time::{Duration, Instant};

const SPIN_BUDGET: Duration = Duration::from_micros(50);

struct State {
    arrived: usize,
    waiters: Vec<Thread>,
}

pub struct PhaseBarrier {
    parties: usize,
    spin: bool,
    generation: AtomicUsize,
    state: Mutex<State>,
}

impl PhaseBarrier {
    pub fn new(parties: usize) -> Self {
        assert!(parties > 0);
        let cores = thread::available_parallelism().map_or(1, |n| n.get());
        PhaseBarrier {
            parties,
            spin: cores >= parties,
            generation: AtomicUsize::new(0),
            state: Mutex::new(State {
                arrived: 0,
                waiters: Vec::with_capacity(parties),
            }),
        }
    }

    /// Blocks until all parties have arrived. Returns `true` on exactly one
    /// thread per round.
    pub fn wait(&self) -> bool {
        self.enter(false, true)
    }

    /// As [`wait`](Self::wait), but this thread is woken ahead of those
    /// that used `wait`. On an oversubscribed core the wake order is
    /// roughly the order in which threads get to run.
    pub fn wait_first(&self) -> bool {
        self.enter(true, true)
    }

    /// Counts this thread as arrived without waiting for the others.
    pub fn arrive(&self) {
        self.enter(false, false);
    }

    fn enter(&self, first: bool, block: bool) -> bool {
        let mut st = self.state.lock().unwrap();
        let gen = self.generation.load(Ordering::Relaxed);
        st.arrived += 1;
        if st.arrived == self.parties {
            st.arrived = 0;
            let waiters = std::mem::take(&mut st.waiters);
            self.generation
                .store(gen.wrapping_add(1), Ordering::Release);
            drop(st);
            for w in &waiters {
                w.unpark();
            }
            // Hand the allocation back for the next round.
            let mut waiters = waiters;
            waiters.clear();
            let mut st = self.state.lock().unwrap();
            if st.waiters.is_empty() {
                st.waiters = waiters;
            }
            return true;
        }
        if !block {
            return false;
        }
        if first {
            st.waiters.insert(0, thread::current());
        } else {
            st.waiters.push(thread::current());
        }
        drop(st);

        if self.spin {
            let start = Instant::now();
            let mut polls = 0u32;
            while self.generation.load(Ordering::Acquire) == gen {
                polls += 1;
                if polls % 64 == 0 && start.elapsed() > SPIN_BUDGET {
                    break;
                }
                std::hint::spin_loop();
            }
        }
        while self.generation.load(Ordering::Acquire) == gen {
            thread::park();
        }
        false
    }
}
