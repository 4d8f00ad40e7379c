//! Four-mode radio energy accounting: transmit, receive, idle listening and
//! overhearing.
//!
//! Per-frame charges follow `E = bits * P / bitrate`: with the default
//! profile a frame of `b` bits costs `b * 0.330 / 2e6` J to send and
//! `b * 0.230 / 2e6` J to receive or overhear. Idle power is charged for all
//! time the radio was not busy, once, when the run closes.

use crate::config::PowerProfile;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Tx,
    Rx,
    Overhear,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EnergyMeter {
    pub e_tx: f64,
    pub e_rx: f64,
    pub e_over: f64,
    pub e_idle: f64,
    pub busy_time: f64,
    initial: f64,
    idle_power: f64,
    finalized: bool,
}

impl EnergyMeter {
    pub fn new(profile: &PowerProfile) -> Self {
        Self {
            e_tx: 0.0,
            e_rx: 0.0,
            e_over: 0.0,
            e_idle: 0.0,
            busy_time: 0.0,
            initial: profile.initial_energy_j,
            idle_power: profile.idle_power_w,
            finalized: false,
        }
    }

    fn charge(&mut self, mode: Mode, size_bytes: u32, profile: &PowerProfile, bitrate: f64) -> Result<f64> {
        if size_bytes == 0 {
            return Err(SimError::Argument("cannot charge a zero-length frame".into()));
        }
        let secs = airtime(size_bytes, bitrate);
        let (acc, power) = match mode {
            Mode::Tx => (&mut self.e_tx, profile.tx_power_w),
            Mode::Rx => (&mut self.e_rx, profile.rx_power_w),
            Mode::Overhear => (&mut self.e_over, profile.overhear_power_w),
        };
        let joules = f64::from(size_bytes) * 8.0 * power / bitrate;
        *acc += joules;
        self.busy_time += secs;
        Ok(joules)
    }

    pub fn charge_tx(&mut self, size_bytes: u32, profile: &PowerProfile, bitrate: f64) -> Result<f64> {
        self.charge(Mode::Tx, size_bytes, profile, bitrate)
    }

    pub fn charge_rx(&mut self, size_bytes: u32, profile: &PowerProfile, bitrate: f64) -> Result<f64> {
        self.charge(Mode::Rx, size_bytes, profile, bitrate)
    }

    pub fn charge_overhear(&mut self, size_bytes: u32, profile: &PowerProfile, bitrate: f64) -> Result<f64> {
        self.charge(Mode::Overhear, size_bytes, profile, bitrate)
    }

    /// Charge idle listening for the non-busy part of the run. Call once.
    pub fn finalize_idle(&mut self, run_duration: f64) -> Result<()> {
        if self.finalized {
            return Err(SimError::Invariant("idle energy finalized twice".into()));
        }
        if self.busy_time > run_duration * (1.0 + 1e-12) {
            return Err(SimError::Invariant(format!(
                "busy time {} exceeds run duration {}",
                self.busy_time, run_duration
            )));
        }
        let idle_time = (run_duration - self.busy_time).max(0.0);
        self.e_idle = self.idle_power * idle_time;
        self.finalized = true;
        Ok(())
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn consumed(&self) -> f64 {
        self.e_tx + self.e_rx + self.e_over + self.e_idle
    }

    pub fn remaining(&self) -> f64 {
        self.initial - self.consumed()
    }

    /// Energy left at `now`, counting idle draw so far as if the radio were
    /// idle whenever it was not busy.
    pub fn remaining_at(&self, now: f64) -> f64 {
        let idle = self.idle_power * (now - self.busy_time).max(0.0);
        self.initial - (self.e_tx + self.e_rx + self.e_over + idle)
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    /// `initial == remaining + sum of mode energies` within `rel_tol`.
    pub fn check_conservation(&self, rel_tol: f64) -> Result<()> {
        let lhs = self.initial;
        let rhs = self.remaining() + self.e_tx + self.e_rx + self.e_idle + self.e_over;
        if (lhs - rhs).abs() > rel_tol * lhs.abs() {
            return Err(SimError::Invariant(format!(
                "energy not conserved: initial {lhs} vs {rhs}"
            )));
        }
        if [self.e_tx, self.e_rx, self.e_idle, self.e_over].iter().any(|e| *e < 0.0) {
            return Err(SimError::Invariant("negative mode energy".into()));
        }
        Ok(())
    }
}

/// Seconds on air for a frame of `size_bytes` at `bitrate` bits/s.
pub fn airtime(size_bytes: u32, bitrate: f64) -> f64 {
    f64::from(size_bytes) * 8.0 / bitrate
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const RATE: f64 = 2.0e6;

    fn meter() -> (EnergyMeter, PowerProfile) {
        let p = PowerProfile::default();
        (EnergyMeter::new(&p), p)
    }

    #[test]
    fn tx_rx_overhear_for_4096_bits() {
        let (mut m, p) = meter();
        // 4096 bits = 512 bytes
        let tx = m.charge_tx(512, &p, RATE).unwrap();
        let rx = m.charge_rx(512, &p, RATE).unwrap();
        let ov = m.charge_overhear(512, &p, RATE).unwrap();
        assert_relative_eq!(tx, 6.7584e-4, max_relative = 1e-12);
        assert_relative_eq!(rx, 4.7104e-4, max_relative = 1e-12);
        assert_relative_eq!(ov, 4.7104e-4, max_relative = 1e-12);
        assert!(rx < tx);
        assert_relative_eq!(m.busy_time, 3.0 * 4096.0 / RATE, max_relative = 1e-12);
    }

    #[test]
    fn zero_size_rejected() {
        let (mut m, p) = meter();
        assert!(m.charge_tx(0, &p, RATE).is_err());
    }

    #[test]
    fn charges_are_linear() {
        let (mut a, p) = meter();
        let (mut b, _) = meter();
        a.charge_tx(300, &p, RATE).unwrap();
        a.charge_tx(300, &p, RATE).unwrap();
        b.charge_tx(600, &p, RATE).unwrap();
        assert_relative_eq!(a.e_tx, b.e_tx, max_relative = 1e-12);
    }

    #[test]
    fn rx_busy_increment_is_airtime() {
        let (mut m, p) = meter();
        m.charge_rx(544, &p, RATE).unwrap();
        assert_relative_eq!(m.busy_time, airtime(544, RATE), max_relative = 1e-15);
    }

    #[test]
    fn idle_only_300s() {
        let (mut m, _) = meter();
        m.finalize_idle(300.0).unwrap();
        assert_relative_eq!(m.e_idle, 69.0, max_relative = 1e-12);
        assert_relative_eq!(m.remaining(), 931.0, max_relative = 1e-12);
        m.check_conservation(1e-9).unwrap();
        assert!(m.finalize_idle(300.0).is_err());
    }

    #[test]
    fn fully_busy_has_no_idle() {
        let (mut m, _) = meter();
        m.busy_time = 10.0;
        m.finalize_idle(10.0).unwrap();
        assert_eq!(m.e_idle, 0.0);
    }

    #[test]
    fn overbusy_is_fatal() {
        let (mut m, _) = meter();
        m.busy_time = 11.0;
        assert!(m.finalize_idle(10.0).unwrap_err().is_invariant());
    }

    #[test]
    fn conservation_after_mixed_charges() {
        let (mut m, p) = meter();
        for s in [44u32, 48, 544, 1000, 32] {
            m.charge_tx(s, &p, RATE).unwrap();
            m.charge_rx(s, &p, RATE).unwrap();
            m.charge_overhear(s, &p, RATE).unwrap();
        }
        m.finalize_idle(900.0).unwrap();
        m.check_conservation(1e-9).unwrap();
        assert_relative_eq!(m.remaining() + m.consumed(), 1000.0, max_relative = 1e-12);
    }
}
