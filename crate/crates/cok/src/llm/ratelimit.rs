use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket shared by every worker using one backend. Holds up to
/// `per_minute` tokens and refills continuously.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(n: u32) -> Self {
        assert!(n > 0, "rate must be positive");
        let capacity = f64::from(n);
        Self {
            capacity,
            per_sec: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Time until a token would be available, taking it if one is.
    fn try_take(&self) -> Option<Duration> {
        let mut s = self.state.lock().unwrap();
        let now = Instant::now();
        s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_sec).min(self.capacity);
        s.1 = now;
        if s.0 >= 1.0 {
            s.0 -= 1.0;
            None
        } else {
            Some(Duration::from_secs_f64((1.0 - s.0) / self.per_sec))
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        while let Some(wait) = self.try_take() {
            std::thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_throttle() {
        let rl = RateLimiter::per_minute(600);
        for _ in 0..600 {
            assert!(rl.try_take().is_none());
        }
        let wait = rl.try_take().expect("bucket is empty");
        assert!(wait <= Duration::from_millis(100), "{wait:?}");
        let t = Instant::now();
        rl.acquire();
        assert!(t.elapsed() >= Duration::from_millis(50));
    }
}
