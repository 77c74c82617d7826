//! Banded evaluation of the coupling sums.
//!
//! At a given `z` the kernel factor `g(x_i + zβ - t_l)` is nonzero only for
//! `|x_i + zβ - t_l| ≤ R`, so each source index sees a short contiguous run
//! of ancilla indices and vice versa. A signal-idler cell couples at all only
//! when both runs overlap, i.e. within `2R` of the front line. The stepper
//! gathers those cells into a band, advances them with RK4, and scatters them
//! back; every other cell has an identically zero right-hand side over the
//! step.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::Axis;
use crate::kernel::SeparableKernel;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Kernel factor samples between one source axis and the ancilla axis at a
/// fixed `z`, indexed both ways.
#[derive(Clone, Debug)]
pub(crate) struct AxisTaps {
    // forward: source index -> ancilla range and values
    lo: Vec<usize>,
    hi: Vec<usize>,
    off: Vec<usize>,
    vals: Vec<f64>,
    // inverse: ancilla index -> source range and values
    ilo: Vec<usize>,
    ihi: Vec<usize>,
    ioff: Vec<usize>,
    ivals: Vec<f64>,
}

fn commensurate(src: &Axis, ta: &Axis) -> bool {
    let d = src.spacing;
    if (d - ta.spacing).abs() > 1e-12 * d {
        return false;
    }
    let p = (src.start - ta.start) / d;
    (p - p.round()).abs() < 1e-9
}

impl AxisTaps {
    /// Taps for `g(src_i + shift - ta_l)`.
    pub(crate) fn build(src: &Axis, ta: &Axis, shift: f64, kernel: &dyn SeparableKernel) -> Self {
        let r = kernel.support_radius();
        // Uniform commensurate axes: the argument depends on i - l only.
        let table = if commensurate(src, ta) {
            let d = src.spacing;
            let base = (src.start - ta.start) / d;
            let base = base.round() * d + shift;
            let m_lo = ((-r - base) / d).floor() as i64 - 1;
            let m_hi = ((r - base) / d).ceil() as i64 + 1;
            let vals: Vec<f64> = (m_lo..=m_hi)
                .map(|m| kernel.factor(base + m as f64 * d))
                .collect();
            Some((m_lo, vals))
        } else {
            None
        };
        let value = |i: usize, l: usize| -> f64 {
            match &table {
                Some((m_lo, vals)) => {
                    let m = i as i64 - l as i64 - m_lo;
                    if m < 0 || m as usize >= vals.len() {
                        0.0
                    } else {
                        vals[m as usize]
                    }
                }
                None => kernel.factor(src.coord(i) + shift - ta.coord(l)),
            }
        };

        let mut lo = Vec::with_capacity(src.count);
        let mut hi = Vec::with_capacity(src.count);
        let mut off = Vec::with_capacity(src.count);
        let mut vals = Vec::new();
        for i in 0..src.count {
            let x = src.coord(i) + shift;
            let range = ta.index_range(x - r - ta.spacing, x + r + ta.spacing);
            let (mut a, mut b) = (range.start, range.end);
            while a < b && value(i, a) == 0.0 {
                a += 1;
            }
            while b > a && value(i, b - 1) == 0.0 {
                b -= 1;
            }
            lo.push(a);
            hi.push(b);
            off.push(vals.len());
            vals.extend((a..b).map(|l| value(i, l)));
        }

        let mut ilo = vec![usize::MAX; ta.count];
        let mut ihi = vec![0usize; ta.count];
        for i in 0..src.count {
            for l in lo[i]..hi[i] {
                ilo[l] = ilo[l].min(i);
                ihi[l] = ihi[l].max(i + 1);
            }
        }
        let mut ioff = Vec::with_capacity(ta.count);
        let mut ivals = Vec::new();
        for l in 0..ta.count {
            if ilo[l] == usize::MAX {
                ilo[l] = 0;
                ihi[l] = 0;
            }
            ioff.push(ivals.len());
            for i in ilo[l]..ihi[l] {
                ivals.push(if (lo[i]..hi[i]).contains(&l) {
                    vals[off[i] + l - lo[i]]
                } else {
                    0.0
                });
            }
        }
        Self {
            lo,
            hi,
            off,
            vals,
            ilo,
            ihi,
            ioff,
            ivals,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> (usize, &[f64]) {
        (self.lo[i], &self.vals[self.off[i]..self.off[i] + self.hi[i] - self.lo[i]])
    }

    #[inline]
    fn inverse(&self, l: usize) -> (usize, &[f64]) {
        (
            self.ilo[l],
            &self.ivals[self.ioff[l]..self.ioff[l] + self.ihi[l] - self.ilo[l]],
        )
    }

    /// Ancilla range reached from source index `i`.
    pub(crate) fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.lo[i]..self.hi[i]
    }
}

/// Kernel taps for both photon axes at one `z`.
#[derive(Clone, Debug)]
pub(crate) struct StageTaps {
    pub z: f64,
    pub s: AxisTaps,
    pub i: AxisTaps,
}

impl StageTaps {
    pub(crate) fn build(
        z: f64,
        eta: &Axis,
        nu: &Axis,
        ta: &Axis,
        beta1s: f64,
        beta1i: f64,
        kernel: &dyn SeparableKernel,
    ) -> Self {
        Self {
            z,
            s: AxisTaps::build(eta, ta, z * beta1s, kernel),
            i: AxisTaps::build(nu, ta, z * beta1i, kernel),
        }
    }
}

/// Ragged set of signal-idler cells: row `j` holds columns `lo[j]..hi[j]`,
/// stored contiguously starting at `off[j]`.
#[derive(Clone, Debug, Default)]
pub(crate) struct Band {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub off: Vec<usize>,
    pub len: usize,
}

impl Band {
    /// Cells whose tap runs overlap for at least one of `taps`.
    pub(crate) fn covering(n_eta: usize, n_nu: usize, taps: &[&StageTaps]) -> Self {
        let mut lo = vec![usize::MAX; n_eta];
        let mut hi = vec![0usize; n_eta];
        for t in taps {
            // columns k with range_i(k) ∩ range_s(j) ≠ ∅; both ranges move
            // monotonically with their index, so the set is contiguous.
            for j in 0..n_eta {
                let rs = t.s.range(j);
                if rs.is_empty() {
                    continue;
                }
                let (a, b) = column_span(&t.i, n_nu, rs.start, rs.end);
                if a < b {
                    lo[j] = lo[j].min(a);
                    hi[j] = hi[j].max(b);
                }
            }
        }
        let mut off = Vec::with_capacity(n_eta);
        let mut len = 0;
        for j in 0..n_eta {
            if lo[j] == usize::MAX {
                lo[j] = 0;
                hi[j] = 0;
            }
            off.push(len);
            len += hi[j] - lo[j];
        }
        Self { lo, hi, off, len }
    }

    /// Every cell of an `n_eta × n_nu` grid.
    pub(crate) fn full(n_eta: usize, n_nu: usize) -> Self {
        Self {
            lo: vec![0; n_eta],
            hi: vec![n_nu; n_eta],
            off: (0..n_eta).map(|j| j * n_nu).collect(),
            len: n_eta * n_nu,
        }
    }

    pub(crate) fn rows(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub(crate) fn index(&self, j: usize, k: usize) -> usize {
        self.off[j] + k - self.lo[j]
    }

    pub(crate) fn gather(&self, full: &[Complex64], n_nu: usize, out: &mut Vec<Complex64>) {
        out.clear();
        out.reserve(self.len);
        for j in 0..self.rows() {
            out.extend_from_slice(&full[j * n_nu + self.lo[j]..j * n_nu + self.hi[j]]);
        }
    }
}

/// Columns `k` whose ancilla run intersects `[l0, l1)`.
fn column_span(ti: &AxisTaps, n_nu: usize, l0: usize, l1: usize) -> (usize, usize) {
    // runs are monotone in k; use the inverse map of the end points
    let mut a = usize::MAX;
    let mut b = 0;
    for l in l0..l1 {
        let (s, v) = ti.inverse(l);
        if !v.is_empty() {
            a = a.min(s);
            b = b.max(s + v.len());
        }
    }
    if a == usize::MAX {
        (0, 0)
    } else {
        (a, b.min(n_nu))
    }
}

/// `out[cell] = scale · Σ_l g_s(j,l) g_i(k,l) a_w[l]` over the band.
pub(crate) fn to_si(taps: &StageTaps, band: &Band, a_w: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
    assert_eq!(out.len(), band.len);
    let rows: Vec<(usize, &mut [Complex64])> = {
        let mut rest = out;
        let mut v = Vec::with_capacity(band.rows());
        for j in 0..band.rows() {
            let (head, tail) = rest.split_at_mut(band.hi[j] - band.lo[j]);
            v.push((j, head));
            rest = tail;
        }
        v
    };
    rows.into_par_iter().for_each_init(Vec::new, |h, (j, row)| {
        if row.is_empty() {
            return;
        }
        let (ls, gs) = taps.s.row(j);
        // h_l = g_s(j,l) a_w[l]
        h.clear();
        h.extend(gs.iter().enumerate().map(|(n, g)| a_w[ls + n] * *g));
        let le = ls + h.len();
        for (n, cell) in row.iter_mut().enumerate() {
            let k = band.lo[j] + n;
            let (li, gi) = taps.i.row(k);
            let a = ls.max(li);
            let b = le.min(li + gi.len());
            let mut acc = ZERO;
            for l in a..b {
                acc += h[l - ls] * gi[l - li];
            }
            *cell = acc * scale;
        }
    });
}

/// `out[l] = scale · Σ_{j,k} g_s(j,l) g_i(k,l) psi_w[cell]` over the band.
pub(crate) fn to_a(taps: &StageTaps, band: &Band, psi_w: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
    out.par_iter_mut().enumerate().for_each(|(l, o)| {
        let (js, gsv) = taps.s.inverse(l);
        let (ks, giv) = taps.i.inverse(l);
        let ke = ks + giv.len();
        let mut acc = ZERO;
        for (n, gs) in gsv.iter().enumerate() {
            if *gs == 0.0 {
                continue;
            }
            let j = js + n;
            let a = ks.max(band.lo[j]);
            let b = ke.min(band.hi[j]);
            if a >= b {
                continue;
            }
            let base = band.index(j, a);
            let mut row = ZERO;
            for (m, p) in psi_w[base..base + (b - a)].iter().enumerate() {
                row += p * giv[a - ks + m];
            }
            acc += row * *gs;
        }
        *o = acc * scale;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GaussianKernel;

    #[test]
    fn taps_match_direct_evaluation() {
        let k = GaussianKernel::with_sigma(0.05).unwrap();
        let src = Axis::symmetric(2.0, 161).unwrap();
        for (ta, shift) in [
            (Axis::symmetric(2.0, 161).unwrap(), 0.37),
            (Axis::new(-1.9, 0.021, 180).unwrap(), -0.11),
        ] {
            let t = AxisTaps::build(&src, &ta, shift, &k);
            for i in 0..src.count {
                for l in 0..ta.count {
                    let direct = k.factor(src.coord(i) + shift - ta.coord(l));
                    let (lo, v) = t.row(i);
                    let fwd = if (lo..lo + v.len()).contains(&l) { v[l - lo] } else { 0.0 };
                    let (ilo, iv) = t.inverse(l);
                    let inv = if (ilo..ilo + iv.len()).contains(&i) { iv[i - ilo] } else { 0.0 };
                    assert!((fwd - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{i} {l}");
                    assert_eq!(fwd, inv);
                }
            }
        }
    }

    #[test]
    fn band_contains_all_coupled_cells() {
        let k = GaussianKernel::with_sigma(0.05).unwrap();
        let ax = Axis::symmetric(3.0, 121).unwrap();
        let t0 = StageTaps::build(0.4, &ax, &ax, &ax, 1.0, -1.0, &k);
        let t1 = StageTaps::build(0.45, &ax, &ax, &ax, 1.0, -1.0, &k);
        let band = Band::covering(ax.count, ax.count, &[&t0, &t1]);
        for t in [&t0, &t1] {
            for j in 0..ax.count {
                for kk in 0..ax.count {
                    let rs = t.s.range(j);
                    let ri = t.i.range(kk);
                    let touches = rs.start.max(ri.start) < rs.end.min(ri.end);
                    if touches {
                        assert!((band.lo[j]..band.hi[j]).contains(&kk));
                    }
                }
            }
        }
        assert!(band.len < ax.count * ax.count / 4);
    }
}
