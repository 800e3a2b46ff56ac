//! Timing helpers: low-slack sleeping and per-thread CPU time.

use std::cell::Cell;
use std::time::{Duration, Instant};

thread_local! {
    static SLACK_SET: Cell<bool> = const { Cell::new(false) };
}

/// Asks the kernel for the smallest timer slack on this thread so short
/// sleeps do not overshoot by the default 50 us.
fn tighten_timer_slack() {
    SLACK_SET.with(|done| {
        if !done.get() {
            #[cfg(target_os = "linux")]
            // SAFETY: PR_SET_TIMERSLACK takes a plain integer argument and
            // only affects the calling thread.
            unsafe {
                libc::prctl(libc::PR_SET_TIMERSLACK, 1 as libc::c_ulong, 0, 0, 0);
            }
            done.set(true);
        }
    });
}

/// Lowers the calling thread's scheduling priority by `nice` steps.
///
/// Used for compute threads, so that a thread returning from a latency
/// sleep gets the core back promptly when cores are oversubscribed.
/// Best effort: does nothing where unsupported.
pub fn lower_thread_priority(nice: i32) {
    #[cfg(target_os = "linux")]
    // SAFETY: gettid has no preconditions; setpriority on our own thread id
    // only changes this thread's nice value.
    unsafe {
        let tid = libc::syscall(libc::SYS_gettid) as libc::id_t;
        let current = libc::getpriority(libc::PRIO_PROCESS, tid);
        libc::setpriority(libc::PRIO_PROCESS, tid, (current + nice).min(19));
    }
    #[cfg(not(target_os = "linux"))]
    let _ = nice;
}

/// Blocks the calling thread until `deadline` without spinning.
pub fn sleep_until(deadline: Instant) {
    tighten_timer_slack();
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        std::thread::sleep(deadline - now);
    }
}

pub fn sleep_for(d: Duration) {
    if !d.is_zero() {
        sleep_until(Instant::now() + d);
    }
}

/// CPU time consumed by the calling thread, where the platform exposes it.
pub fn thread_cpu_time() -> Option<Duration> {
    #[cfg(unix)]
    {
        let mut ts = libc::timespec {
            tv_sec: 0,
            tv_nsec: 0,
        };
        // SAFETY: ts is a valid, writable timespec.
        let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
        if rc == 0 {
            return Some(Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32));
        }
    }
    None
}

/// Measures one stretch of work on the calling thread.
///
/// `busy` is the thread's CPU time when available and wall time otherwise.
/// On an oversubscribed host the wall span also counts time spent
/// descheduled, so `busy` is the better measure of the thread's own load.
pub struct Stopwatch {
    wall: Instant,
    cpu: Option<Duration>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Span {
    pub wall: Duration,
    pub busy: Duration,
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            wall: Instant::now(),
            cpu: thread_cpu_time(),
        }
    }

    pub fn stop(self) -> Span {
        let wall = self.wall.elapsed();
        let busy = match (self.cpu, thread_cpu_time()) {
            (Some(a), Some(b)) => b.saturating_sub(a),
            _ => wall,
        };
        Span { wall, busy }
    }
}

/// Observed granularity of [`Instant`], the smallest nonzero step seen.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}
