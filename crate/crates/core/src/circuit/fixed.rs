use crate::error::{Error, Result};

use super::REGISTER_BITS;

/// A signed fixed-point number held in a [`REGISTER_BITS`]-wide register.
///
/// Products are computed exactly in 128 bits and rounded to nearest; any
/// result that does not fit the register is an overflow error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixed {
    raw: i128,
    frac_bits: u32,
}

fn fits(raw: i128) -> bool {
    let limit = 1i128 << (REGISTER_BITS - 1);
    (-limit..limit).contains(&raw)
}

impl Fixed {
    pub fn zero(frac_bits: u32) -> Self {
        Self { raw: 0, frac_bits }
    }

    pub fn from_f64(v: f64, frac_bits: u32, stage: &'static str) -> Result<Self> {
        let scaled = (v * (frac_bits as f64).exp2()).round();
        if !scaled.is_finite() || scaled.abs() >= (REGISTER_BITS as f64 - 1.0).exp2() {
            return Err(Error::FixedPointOverflow(stage));
        }
        Ok(Self {
            raw: scaled as i128,
            frac_bits,
        })
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 / (self.frac_bits as f64).exp2()
    }

    pub fn raw(self) -> i128 {
        self.raw
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    fn checked(raw: i128, frac_bits: u32, stage: &'static str) -> Result<Self> {
        if fits(raw) {
            Ok(Self { raw, frac_bits })
        } else {
            Err(Error::FixedPointOverflow(stage))
        }
    }

    pub fn add(self, o: Fixed, stage: &'static str) -> Result<Self> {
        debug_assert_eq!(self.frac_bits, o.frac_bits);
        Self::checked(self.raw + o.raw, self.frac_bits, stage)
    }

    pub fn sub(self, o: Fixed, stage: &'static str) -> Result<Self> {
        debug_assert_eq!(self.frac_bits, o.frac_bits);
        Self::checked(self.raw - o.raw, self.frac_bits, stage)
    }

    pub fn mul(self, o: Fixed, stage: &'static str) -> Result<Self> {
        debug_assert_eq!(self.frac_bits, o.frac_bits);
        let prod = self.raw * o.raw;
        let f = self.frac_bits;
        let half = 1i128 << (f - 1);
        // round half away from zero
        let raw = if prod >= 0 {
            (prod + half) >> f
        } else {
            -((-prod + half) >> f)
        };
        Self::checked(raw, f, stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rounding() {
        let a = Fixed::from_f64(1.5, 8, "t").unwrap();
        assert_eq!(a.raw(), 384);
        assert_eq!(a.to_f64(), 1.5);
        let third = Fixed::from_f64(1.0 / 3.0, 8, "t").unwrap();
        assert_eq!(third.raw(), 85);
        let p = a.mul(third, "t").unwrap();
        assert_eq!(p.raw(), 128); // 384·85/256 = 127.5 → 128
        let n = Fixed::from_f64(-1.5, 8, "t").unwrap().mul(third, "t").unwrap();
        assert_eq!(n.raw(), -128);
        assert_eq!(a.sub(a, "t").unwrap(), Fixed::zero(8));
    }

    #[test]
    fn overflow_is_an_error() {
        assert_eq!(Fixed::from_f64(1e12, 32, "load"), Err(Error::FixedPointOverflow("load")));
        let big = Fixed::from_f64(2e9, 32, "t").unwrap();
        assert_eq!(big.add(big, "sum"), Err(Error::FixedPointOverflow("sum")));
        assert_eq!(big.mul(big, "prod"), Err(Error::FixedPointOverflow("prod")));
        assert!(Fixed::from_f64(f64::NAN, 32, "t").is_err());
    }
}
