//! Slotted contention shared by both protocols: a counter drawn from a
//! class-specific window, decremented on idle slot boundaries, frozen while
//! the channel is busy.
//!
//! Sensing conventions are supplied by the caller but are fixed by contract:
//! `begin` uses instantaneous occupancy (a frame starting at the same instant
//! counts as busy), while `tick` and `resume` ignore frames starting exactly
//! at the evaluated instant. The tick-side convention is what makes two
//! stations whose counters expire in the same slot transmit together and
//! collide, instead of one spuriously deferring because the other was
//! processed first at the same timestamp.

use crate::rng::RngStream;

/// Inclusive slot range a class draws its counter from. Non-overlapping
/// ranges per class give strict inter-class priority: a draw from [0, 10]
/// always expires before any draw from [11, 20] started at the same instant.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ContentionWindow {
    pub lo: u32,
    pub hi: u32,
}

impl ContentionWindow {
    pub fn new(lo: u32, hi: u32) -> Self {
        assert!(lo <= hi, "window bounds out of order");
        ContentionWindow { lo, hi }
    }

    pub fn draw(&self, rng: &mut RngStream) -> u32 {
        rng.draw_inclusive(self.lo, self.hi)
    }
}

/// What the caller must do after feeding the machine one sensing result.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Step {
    /// Counter expired: transmit at the instant just evaluated.
    Fire,
    /// Schedule the next slot tick one slot ahead.
    TickLater,
    /// Channel busy: stop ticking until the medium reports idle.
    Freeze,
}

#[derive(Clone, Copy, Debug)]
pub struct Backoff {
    remaining: u32,
    frozen: bool,
}

impl Backoff {
    pub fn new(slots: u32) -> Backoff {
        Backoff {
            remaining: slots,
            frozen: false,
        }
    }

    pub fn remaining(&self) -> u32 {
        self.remaining
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Entry evaluation at the instant contention starts.
    pub fn begin(&mut self, busy: bool) -> Step {
        if busy {
            self.frozen = true;
            Step::Freeze
        } else if self.remaining == 0 {
            Step::Fire
        } else {
            self.frozen = false;
            Step::TickLater
        }
    }

    /// Slot-boundary evaluation. Decrements only on an idle slot.
    pub fn tick(&mut self, busy: bool) -> Step {
        debug_assert!(!self.frozen, "tick on a frozen counter");
        if busy {
            self.frozen = true;
            Step::Freeze
        } else {
            self.remaining -= 1;
            if self.remaining == 0 {
                Step::Fire
            } else {
                Step::TickLater
            }
        }
    }

    /// The medium went idle while frozen. A zero counter fires at the idle
    /// instant itself; otherwise ticking restarts one slot ahead with no
    /// decrement now.
    pub fn resume(&mut self, busy: bool) -> Step {
        debug_assert!(self.frozen, "resume on a counter that was not frozen");
        self.frozen = false;
        if busy {
            self.frozen = true;
            Step::Freeze
        } else if self.remaining == 0 {
            Step::Fire
        } else {
            Step::TickLater
        }
    }
}
