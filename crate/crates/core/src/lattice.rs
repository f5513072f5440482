//! The discretized spacetime box: a sampled time window `[0, t_final]`
//! padded for spectral work, times a periodic cube of side `box_len`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which time samples a scalar field carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeAxis {
    /// `n_t` samples on `[0, t_final]`.
    Window,
    /// `n_t + t_pad` samples on the periodic embedding. Index `k` maps to
    /// time `k dt` for the first `n_t + t_pad/2` samples and wraps to
    /// negative times afterwards.
    Padded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub t_final: f64,
    pub n_t: usize,
    pub t_pad: usize,
    pub box_len: f64,
    pub n_x: usize,
    pub support_margin: f64,
}

impl Lattice {
    /// Builds a lattice with the smallest admissible time padding.
    pub fn new(
        t_final: f64,
        n_t: usize,
        box_len: f64,
        n_x: usize,
        support_margin: f64,
    ) -> Result<Self> {
        let mut lat = Lattice {
            t_final,
            n_t,
            t_pad: 0,
            box_len,
            n_x,
            support_margin,
        };
        lat.validate_geometry()?;
        let needed = lat.min_padded_len();
        lat.t_pad = next_smooth(needed) - n_t;
        Ok(lat)
    }

    /// Same as [`Lattice::new`] but with an explicit padding, which must
    /// reach the minimal period.
    pub fn with_t_pad(
        t_final: f64,
        n_t: usize,
        t_pad: usize,
        box_len: f64,
        n_x: usize,
        support_margin: f64,
    ) -> Result<Self> {
        let lat = Lattice {
            t_final,
            n_t,
            t_pad,
            box_len,
            n_x,
            support_margin,
        };
        lat.validate()?;
        Ok(lat)
    }

    fn validate_geometry(&self) -> Result<()> {
        if self.n_t < 2 || self.n_x < 2 {
            return Err(Error::InvalidArgument(format!(
                "lattice needs n_t >= 2 and n_x >= 2 (got n_t = {}, n_x = {})",
                self.n_t, self.n_x
            )));
        }
        if !(self.t_final > 0.0) || !(self.box_len > 0.0) {
            return Err(Error::InvalidArgument(
                "t_final and box_len must be positive".into(),
            ));
        }
        if self.support_margin < self.t_final {
            return Err(Error::InvalidArgument(format!(
                "support_margin {} < t_final {}: characteristics could re-enter the support by wrap-around",
                self.support_margin, self.t_final
            )));
        }
        if self.support_radius() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "support_margin {} leaves no room for a support in a box of side {}",
                self.support_margin, self.box_len
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        if self.n_total() < self.min_padded_len() {
            return Err(Error::InvalidArgument(format!(
                "t_pad {} too small: padded length {} < required {}",
                self.t_pad,
                self.n_total(),
                self.min_padded_len()
            )));
        }
        Ok(())
    }

    /// Smallest number of padded samples whose period covers
    /// `2 (t_final + box diagonal)`.
    pub fn min_padded_len(&self) -> usize {
        let period = 2.0 * (self.t_final + self.box_len * 3f64.sqrt());
        ((period / self.dt()).ceil() as usize).max(self.n_t)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_final / (self.n_t - 1) as f64
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.box_len / self.n_x as f64
    }

    #[inline]
    pub fn n_total(&self) -> usize {
        self.n_t + self.t_pad
    }

    #[inline]
    pub fn n_space(&self) -> usize {
        self.n_x * self.n_x * self.n_x
    }

    pub fn n_time(&self, axis: TimeAxis) -> usize {
        match axis {
            TimeAxis::Window => self.n_t,
            TimeAxis::Padded => self.n_total(),
        }
    }

    /// Period of the padded time axis.
    pub fn period(&self) -> f64 {
        self.n_total() as f64 * self.dt()
    }

    /// Physical time of sample `k` on the given axis.
    pub fn time_of(&self, axis: TimeAxis, k: usize) -> f64 {
        match axis {
            TimeAxis::Window => k as f64 * self.dt(),
            TimeAxis::Padded => {
                let n = self.n_total();
                if k < self.n_t + self.t_pad / 2 {
                    k as f64 * self.dt()
                } else {
                    (k as f64 - n as f64) * self.dt()
                }
            }
        }
    }

    /// Position of spatial sample `i` along one axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn center(&self) -> [f64; 3] {
        let c = 0.5 * self.box_len;
        [c, c, c]
    }

    /// Radius of the declared spatial support ball (centred in the box).
    pub fn support_radius(&self) -> f64 {
        0.5 * self.box_len - self.support_margin
    }

    /// Linear index of spatial sample `(ix, iy, iz)`; `z` runs fastest.
    #[inline]
    pub fn sidx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n_x + iy) * self.n_x + iz
    }

    pub fn point(&self, s: usize) -> [f64; 3] {
        let n = self.n_x;
        let iz = s % n;
        let iy = (s / n) % n;
        let ix = s / (n * n);
        [self.coord(ix), self.coord(iy), self.coord(iz)]
    }

    /// Periodic distance from the box centre.
    pub fn dist_from_center(&self, p: [f64; 3]) -> f64 {
        let c = self.center();
        let l = self.box_len;
        let mut r2 = 0.0;
        for a in 0..3 {
            let mut d = (p[a] - c[a]).rem_euclid(l);
            if d > 0.5 * l {
                d -= l;
            }
            r2 += d * d;
        }
        r2.sqrt()
    }

    /// Angular frequency of DFT index `k` on a periodic axis of `n` samples
    /// and period `len`.
    pub fn freq(k: usize, n: usize, len: f64) -> f64 {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        2.0 * std::f64::consts::PI * kk / len
    }

    pub fn spatial_freq(&self, k: usize) -> f64 {
        Self::freq(k, self.n_x, self.box_len)
    }

    pub fn temporal_freq(&self, k: usize) -> f64 {
        Self::freq(k, self.n_total(), self.period())
    }
}

/// Smallest integer >= n whose prime factors are all in {2, 3, 5}.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
