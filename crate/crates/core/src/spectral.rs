//! Optical line shapes and the cavity linewidth/lifetime correspondence.
//!
//! Frequencies are detunings in Hz from a reference the caller chooses, so a
//! line centred on the reference has `center == 0.0`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LineShape {
    #[default]
    Lorentzian,
    Gaussian,
}

/// A peak-normalized optical line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    /// Detuning of the line centre (Hz).
    pub center: f64,
    /// Full width at half maximum (Hz).
    pub fwhm: f64,
    pub shape: LineShape,
}

impl SpectralLine {
    pub fn new(center: f64, fwhm: f64, shape: LineShape) -> Result<Self> {
        let line = Self {
            center,
            fwhm,
            shape,
        };
        line.validate()?;
        Ok(line)
    }

    pub fn lorentzian(center: f64, fwhm: f64) -> Result<Self> {
        Self::new(center, fwhm, LineShape::Lorentzian)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("fwhm", self.fwhm)?;
        if !self.center.is_finite() {
            return Err(invalid("center", "must be finite"));
        }
        Ok(())
    }

    /// Normalized line value at `nu`, see [`line_weight`].
    pub fn weight(&self, nu: f64) -> f64 {
        let x = (nu - self.center) / self.fwhm;
        match self.shape {
            LineShape::Lorentzian => 1.0 / (1.0 + 4.0 * x * x),
            LineShape::Gaussian => (-4.0 * LN_2 * x * x).exp(),
        }
    }

    /// Half-width of the detuning interval outside which the weight drops below `level`.
    pub fn half_span_below(&self, level: f64) -> f64 {
        match self.shape {
            LineShape::Lorentzian => 0.5 * self.fwhm * (1.0 / level - 1.0).max(0.0).sqrt(),
            LineShape::Gaussian => self.fwhm * (-level.ln() / (4.0 * LN_2)).max(0.0).sqrt(),
        }
    }

    /// Photon lifetime matching this linewidth.
    pub fn lifetime(&self) -> f64 {
        1.0 / (2.0 * PI * self.fwhm)
    }
}

/// Peak-normalized value of the line profile at detuning `nu`.
///
/// Lorentzian: `1 / (1 + (2(nu - center)/fwhm)^2)`; Gaussian: `exp(-4 ln2 ((nu - center)/fwhm)^2)`.
pub fn line_weight(line: &SpectralLine, nu: f64) -> Result<f64> {
    line.validate()?;
    Ok(line.weight(nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conversion {
    LinewidthToLifetime,
    LifetimeToLinewidth,
}

/// Converts between a cavity linewidth (Hz) and the photon lifetime (s), `T = 1/(2 pi dnu)`.
///
/// The map is its own inverse, so both directions evaluate the same expression.
pub fn lifetime_linewidth_convert(value: f64, direction: Conversion) -> Result<f64> {
    let name = match direction {
        Conversion::LinewidthToLifetime => "linewidth",
        Conversion::LifetimeToLinewidth => "lifetime",
    };
    require_positive(name, value)?;
    Ok(1.0 / (2.0 * PI * value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lorentzian_reference_points() {
        let f = 185e6;
        let line = SpectralLine::lorentzian(1.2e9, f).unwrap();
        assert_eq!(line_weight(&line, 1.2e9).unwrap(), 1.0);
        assert!((line_weight(&line, 1.2e9 + f / 2.0).unwrap() - 0.5).abs() < 1e-15);

        let centred = SpectralLine::lorentzian(0.0, f).unwrap();
        assert!((line_weight(&centred, 185e6).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn gaussian_half_maximum() {
        let line = SpectralLine::new(0.0, 2e6, LineShape::Gaussian).unwrap();
        assert!((line.weight(1e6) - 0.5).abs() < 1e-12);
        assert!((line.weight(-1e6) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_width() {
        assert!(SpectralLine::lorentzian(0.0, 0.0).is_err());
        assert!(SpectralLine::lorentzian(0.0, -1.0).is_err());
        let bad = SpectralLine {
            center: 0.0,
            fwhm: -3.0,
            shape: LineShape::Lorentzian,
        };
        assert!(matches!(
            line_weight(&bad, 0.0),
            Err(crate::Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn photon_lifetimes_from_linewidths() {
        let t_s = lifetime_linewidth_convert(185e6, Conversion::LinewidthToLifetime).unwrap();
        let t_i = lifetime_linewidth_convert(183e6, Conversion::LinewidthToLifetime).unwrap();
        assert!((t_s * 1e12 - 860.3).abs() < 0.05, "{t_s}");
        assert!((t_i * 1e12 - 869.7).abs() < 0.05, "{t_i}");
        assert!(lifetime_linewidth_convert(0.0, Conversion::LifetimeToLinewidth).is_err());
    }

    #[test]
    fn span_threshold_matches_weight() {
        for shape in [LineShape::Lorentzian, LineShape::Gaussian] {
            let line = SpectralLine::new(3.0, 5e6, shape).unwrap();
            let h = line.half_span_below(1e-4);
            assert!((line.weight(3.0 + h) - 1e-4).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn weight_symmetric_and_monotone(
            center in -1e9f64..1e9,
            fwhm in 1e3f64..1e9,
            a in 0.0f64..5.0,
            b in 0.0f64..5.0,
            gaussian in any::<bool>(),
        ) {
            let shape = if gaussian { LineShape::Gaussian } else { LineShape::Lorentzian };
            let line = SpectralLine::new(center, fwhm, shape).unwrap();
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let w_plus = line.weight(center + near * fwhm);
            let w_minus = line.weight(center - near * fwhm);
            prop_assert!((w_plus - w_minus).abs() <= 1e-12);
            prop_assert!(line.weight(center + far * fwhm) <= w_plus + 1e-15);
        }

        #[test]
        fn conversion_round_trips(x in 1e-12f64..1e12) {
            let there = lifetime_linewidth_convert(x, Conversion::LinewidthToLifetime).unwrap();
            let back = lifetime_linewidth_convert(there, Conversion::LifetimeToLinewidth).unwrap();
            prop_assert!(((back - x) / x).abs() < 1e-14);
        }

        #[test]
        fn wider_line_shorter_lifetime(x in 1e3f64..1e10, factor in 1.0001f64..100.0) {
            let narrow = lifetime_linewidth_convert(x, Conversion::LinewidthToLifetime).unwrap();
            let wide = lifetime_linewidth_convert(x * factor, Conversion::LinewidthToLifetime).unwrap();
            prop_assert!(wide < narrow);
        }
    }
}
