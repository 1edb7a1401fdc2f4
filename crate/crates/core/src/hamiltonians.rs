//! Benchmark Hamiltonians, normalization and dense diagonalization.
//!
//! Qubit `j` of a register is bit `j` of the basis-state index; `|0⟩` is the
//! `Z = +1` state. Fermionic mode `2·site + spin` (spin 0 = up) is occupied
//! when its bit is set.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;

/// Energies of a normalized model are mapped back by `(E - offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMap {
    pub scale: f64,
    pub offset: f64,
}

impl EnergyMap {
    pub const IDENTITY: EnergyMap = EnergyMap { scale: 1.0, offset: 0.0 };

    pub fn forward(&self, e: f64) -> f64 {
        self.scale * e + self.offset
    }

    pub fn inverse(&self, e: f64) -> f64 {
        (e - self.offset) / self.scale
    }

    /// Maps an energy difference back to original units.
    pub fn inverse_delta(&self, de: f64) -> f64 {
        de / self.scale
    }
}

/// A dense Hermitian matrix of dimension `2^modes`.
#[derive(Clone, Debug)]
pub struct DenseHamiltonian {
    entries: DMatrix<Complex64>,
    map: EnergyMap,
}

/// Eigenvalues in ascending order and the matching unit eigenvectors as
/// columns, each with its first nonzero component real and positive.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl DenseHamiltonian {
    /// Validates squareness, power-of-two dimension and Hermiticity.
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        let dim = entries.nrows();
        if dim == 0 || entries.ncols() != dim {
            return Err(Error::config("Hamiltonian must be a nonempty square matrix"));
        }
        if !dim.is_power_of_two() {
            return Err(Error::config(format!("dimension {dim} is not a power of two")));
        }
        let scale = entries.iter().map(|c| c.norm()).fold(1.0f64, f64::max);
        for i in 0..dim {
            for j in 0..=i {
                let d = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if d > HERMITIAN_TOL * scale {
                    return Err(Error::config(format!("matrix is not Hermitian at ({i}, {j}): deviation {d:e}")));
                }
            }
        }
        Ok(DenseHamiltonian { entries, map: EnergyMap::IDENTITY })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Affine map from the original model's energies to this matrix's.
    pub fn energy_map(&self) -> EnergyMap {
        self.map
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    fn is_real(&self) -> bool {
        self.entries.iter().all(|c| c.im == 0.0)
    }

    /// Dense Hermitian eigendecomposition.
    ///
    /// Real matrices go through the real symmetric solver. Output is fully
    /// determined by the matrix: stable ascending sort plus a fixed phase.
    pub fn eigen(&self) -> Eigensystem {
        let dim = self.dim();
        let (values, mut vectors) = if self.is_real() {
            let real = self.entries.map(|c| c.re);
            let eig = SymmetricEigen::new(real);
            (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors.map(|x| Complex64::new(x, 0.0)))
        } else {
            let eig = SymmetricEigen::new(self.entries.clone());
            (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors)
        };
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let mut sorted = DMatrix::<Complex64>::zeros(dim, dim);
        for (dst, &src) in order.iter().enumerate() {
            sorted.set_column(dst, &vectors.column(src));
        }
        vectors = sorted;
        for mut col in vectors.column_iter_mut() {
            if let Some(first) = col.iter().copied().find(|c| c.norm() > 1e-12) {
                let phase = first.conj() / first.norm();
                col.iter_mut().for_each(|c| *c *= phase);
            }
        }
        Eigensystem { values: sorted_values, vectors }
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().values
    }

    /// Spectral norm, the largest eigenvalue magnitude.
    pub fn spectral_norm(&self) -> f64 {
        let ev = self.eigenvalues();
        ev.first().map_or(0.0, |lo| lo.abs()).max(ev.last().map_or(0.0, |hi| hi.abs()))
    }
}

/// Transverse-field Ising chain `-Σ Z_j Z_{j+1} - 4 Σ X_j` with a periodic
/// bond. At two sites the wrap bond repeats the single bond.
pub fn build_tfi(sites: usize) -> Result<DenseHamiltonian> {
    if !(2..=12).contains(&sites) {
        return Err(Error::config(format!("TFI sites must be in 2..=12, got {sites}")));
    }
    let dim = 1usize << sites;
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    let z = |b: usize, j: usize| if b >> j & 1 == 0 { 1.0 } else { -1.0 };
    for b in 0..dim {
        let zz: f64 = (0..sites).map(|j| z(b, j) * z(b, (j + 1) % sites)).sum();
        h[(b, b)] = Complex64::new(-zz, 0.0);
        for j in 0..sites {
            h[(b ^ (1 << j), b)] += Complex64::new(-4.0, 0.0);
        }
    }
    DenseHamiltonian::from_matrix(h)
}

/// Jordan–Wigner sign `(-1)^{occupied modes below `mode`}`.
#[inline]
fn parity_below(state: usize, mode: usize) -> f64 {
    if (state & ((1usize << mode) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Applies `c†_to c_from` (`to != from`) to a basis state.
fn hop(state: usize, to: usize, from: usize) -> Option<(usize, f64)> {
    if state >> from & 1 == 0 {
        return None;
    }
    let mid = state & !(1 << from);
    if mid >> to & 1 == 1 {
        return None;
    }
    let sign = parity_below(state, from) * parity_below(mid, to);
    Some((mid | (1 << to), sign))
}

/// Open Fermi–Hubbard chain: hopping `-(c†_{j,σ} c_{j+1,σ} + h.c.)` and
/// on-site `U (n_↑ - 1/2)(n_↓ - 1/2)`, over `2·sites` Jordan–Wigner modes.
pub fn build_fermi_hubbard(sites: usize, interaction: f64) -> Result<DenseHamiltonian> {
    if !(1..=5).contains(&sites) {
        return Err(Error::config(format!("Fermi-Hubbard sites must be in 1..=5, got {sites}")));
    }
    if !interaction.is_finite() {
        return Err(Error::config("interaction must be finite"));
    }
    let modes = 2 * sites;
    let dim = 1usize << modes;
    let mode = |site: usize, spin: usize| 2 * site + spin;
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for b in 0..dim {
        let mut diag = 0.0;
        for j in 0..sites {
            let up = (b >> mode(j, 0) & 1) as f64;
            let down = (b >> mode(j, 1) & 1) as f64;
            diag += interaction * (up - 0.5) * (down - 0.5);
        }
        h[(b, b)] = Complex64::new(diag, 0.0);
        for j in 0..sites.saturating_sub(1) {
            for spin in 0..2 {
                let (a, c) = (mode(j, spin), mode(j + 1, spin));
                for (to, from) in [(a, c), (c, a)] {
                    if let Some((out, sign)) = hop(b, to, from) {
                        h[(out, b)] += Complex64::new(-sign, 0.0);
                    }
                }
            }
        }
    }
    DenseHamiltonian::from_matrix(h)
}

/// `π H / (4 ‖H‖₂) + π/2`, which places the spectrum in `[π/4, 3π/4]`.
pub fn normalize_and_shift(h: &DenseHamiltonian) -> Result<DenseHamiltonian> {
    let norm = h.spectral_norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DivisionByZero("Hamiltonian has zero spectral norm".into()));
    }
    let scale = PI / (4.0 * norm);
    let mut entries = h.entries.map(|c| c * scale);
    for i in 0..h.dim() {
        entries[(i, i)] += Complex64::new(PI / 2.0, 0.0);
    }
    // Compose with any earlier normalization so the map always points at
    // the originally built model.
    let map = EnergyMap { scale: h.map.scale * scale, offset: h.map.offset * scale + PI / 2.0 };
    Ok(DenseHamiltonian { entries, map })
}

/// Eigenenergies paired with initial-state overlaps `p_ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    energies: Vec<f64>,
    overlaps: Vec<f64>,
}

impl Spectrum {
    /// Energies non-decreasing, overlaps in `[0, 1]` summing to one.
    pub fn new(energies: Vec<f64>, overlaps: Vec<f64>) -> Result<Self> {
        if energies.is_empty() || energies.len() != overlaps.len() {
            return Err(Error::config("spectrum needs equally many energies and overlaps"));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::config("energies must be finite"));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("energies must be non-decreasing"));
        }
        if overlaps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("overlaps must lie in [0, 1]"));
        }
        let total: f64 = overlaps.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::config(format!("overlaps sum to {total}, not 1")));
        }
        Ok(Spectrum { energies, overlaps })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn overlaps(&self) -> &[f64] {
        &self.overlaps
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Lowest energy with nonzero overlap, the estimation target.
    pub fn ground_energy(&self) -> f64 {
        self.energies.iter().zip(&self.overlaps).find(|(_, &p)| p > 0.0).map_or(self.energies[0], |(&e, _)| e)
    }

    /// Pairs with nonzero overlap.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.energies.iter().copied().zip(self.overlaps.iter().copied()).filter(|&(_, p)| p > 0.0)
    }

    /// Levels closer than `tol` merged into one with summed weight.
    pub fn merged(&self, tol: f64) -> Spectrum {
        let mut energies: Vec<f64> = Vec::new();
        let mut overlaps: Vec<f64> = Vec::new();
        for (e, p) in self.support() {
            match energies.last() {
                Some(&last) if (e - last).abs() <= tol => *overlaps.last_mut().unwrap() += p,
                _ => {
                    energies.push(e);
                    overlaps.push(p);
                }
            }
        }
        Spectrum { energies, overlaps }
    }
}

/// `p_ℓ = (1-α) α^ℓ / (1-α^levels)` for `ℓ < levels`.
pub fn alpha_weights(alpha: f64, levels: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if levels == 0 {
        return Err(Error::config("levels must be positive"));
    }
    let norm = (1.0 - alpha) / (1.0 - alpha.powi(levels as i32));
    Ok((0..levels).map(|l| norm * alpha.powi(l as i32)).collect())
}

/// Spectrum of `|Ψ_α⟩ ∝ Σ_{ℓ<levels} √(α^ℓ) |φ_ℓ⟩` over the sorted
/// eigenstates of `h`. Degenerate levels keep their own weight.
pub fn spectrum_for_alpha(h: &DenseHamiltonian, alpha: f64, levels: usize) -> Result<Spectrum> {
    let weights = alpha_weights(alpha, levels)?;
    if levels > h.dim() {
        return Err(Error::config(format!("levels ({levels}) exceeds the dimension ({})", h.dim())));
    }
    let energies = h.eigenvalues();
    let mut overlaps = vec![0.0; energies.len()];
    overlaps[..levels].copy_from_slice(&weights);
    Spectrum::new(energies, overlaps)
}

/// Reads a dense complex matrix stored row-major as `(re, im)` pairs.
///
/// Files ending in `.bin` hold little-endian `f64` pairs; anything else is
/// text with numbers separated by whitespace or commas.
pub fn load_matrix(path: &Path) -> Result<DenseHamiltonian> {
    let values: Vec<f64> = if path.extension().is_some_and(|e| e == "bin") {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if bytes.len() % 16 != 0 {
            return Err(Error::config(format!(
                "{}: binary matrix length is not a multiple of 16 bytes",
                path.display()
            )));
        }
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect()
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        text.lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
            .filter(|tok| !tok.is_empty())
            .map(|tok| tok.parse::<f64>().map_err(|_| Error::config(format!("{}: bad number {tok:?}", path.display()))))
            .collect::<Result<_>>()?
    };
    let pairs = values.len() / 2;
    let dim = (pairs as f64).sqrt().round() as usize;
    if !values.len().is_multiple_of(2) || dim * dim != pairs {
        return Err(Error::config(format!(
            "{}: {} numbers do not form a square complex matrix",
            path.display(),
            values.len()
        )));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        let at = 2 * (i * dim + j);
        Complex64::new(values[at], values[at + 1])
    });
    DenseHamiltonian::from_matrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn residual_ok(h: &DenseHamiltonian) {
        let eig = h.eigen();
        let norm = h.spectral_norm();
        for (k, &e) in eig.values.iter().enumerate() {
            let v = eig.vectors.column(k);
            let r = h.matrix() * v - v * Complex64::new(e, 0.0);
            assert!(r.norm() <= 1e-9 * norm, "pair {k}: residual {}", r.norm());
        }
    }

    #[test]
    fn tfi_dimension_and_trace() {
        let h = build_tfi(8).unwrap();
        assert_eq!(h.dim(), 256);
        assert_abs_diff_eq!(h.trace().norm(), 0.0, epsilon = 1e-12);
        residual_ok(&h);
    }

    #[test]
    fn tfi_two_sites_matches_hand_matrix() {
        // -2 Z1Z2 - 4(X1 + X2) in the basis |00>, |01>, |10>, |11>.
        let m = nalgebra::DMatrix::<f64>::from_row_slice(
            4,
            4,
            &[-2.0, -4.0, -4.0, 0.0, -4.0, 2.0, 0.0, -4.0, -4.0, 0.0, 2.0, -4.0, 0.0, -4.0, -4.0, -2.0],
        );
        let mut expect: Vec<f64> = SymmetricEigen::new(m).eigenvalues.as_slice().to_vec();
        expect.sort_by(f64::total_cmp);
        let got = build_tfi(2).unwrap().eigenvalues();
        for (a, b) in got.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        // The sector spanned by (|00>+|11>)/√2 and (|01>+|10>)/√2 reduces to
        // [[-2, -8], [-8, 2]], whose lower eigenvalue is the ground energy.
        assert_abs_diff_eq!(got[0], -68f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn tfi_rejects_bad_sites() {
        assert!(build_tfi(1).unwrap_err().is_config());
        assert!(build_tfi(13).unwrap_err().is_config());
    }

    #[test]
    fn fh_single_site_spectrum() {
        let u = 3.0;
        let ev = build_fermi_hubbard(1, u).unwrap().eigenvalues();
        let expect = [-u / 4.0, -u / 4.0, u / 4.0, u / 4.0];
        for (a, b) in ev.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn fh_free_fermions_two_sites() {
        // Single-particle hopping [[0,-1],[-1,0]] has energies ±1 per spin;
        // many-body energies are all sums over occupied orbitals.
        let orbitals = [-1.0, 1.0, -1.0, 1.0];
        let mut expect: Vec<f64> =
            (0..16u32).map(|mask| (0..4).filter(|i| mask >> i & 1 == 1).map(|i| orbitals[i]).sum()).collect();
        expect.sort_by(f64::total_cmp);
        let got = build_fermi_hubbard(2, 0.0).unwrap().eigenvalues();
        for (a, b) in got.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn fh_four_sites() {
        let h = build_fermi_hubbard(4, 10.0).unwrap();
        assert_eq!(h.dim(), 256);
        residual_ok(&h);
        assert!(build_fermi_hubbard(6, 1.0).unwrap_err().is_config());
        assert!(build_fermi_hubbard(0, 1.0).unwrap_err().is_config());
    }

    #[test]
    fn normalization_endpoints() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(-4.0, 0.0),
            Complex64::new(4.0, 0.0),
        ]));
        let h = normalize_and_shift(&DenseHamiltonian::from_matrix(m).unwrap()).unwrap();
        let ev = h.eigenvalues();
        assert_abs_diff_eq!(ev[0], PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev[1], 3.0 * PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.energy_map().inverse(ev[0]), -4.0, epsilon = 1e-12);
    }

    #[test]
    fn normalization_of_identity_multiple_and_zero() {
        let m = DMatrix::<Complex64>::identity(4, 4) * Complex64::new(2.5, 0.0);
        let h = normalize_and_shift(&DenseHamiltonian::from_matrix(m).unwrap()).unwrap();
        for e in h.eigenvalues() {
            assert_abs_diff_eq!(e, 3.0 * PI / 4.0, epsilon = 1e-15);
        }
        let z = DenseHamiltonian::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(normalize_and_shift(&z), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn normalized_tfi_in_band_and_order_preserved() {
        let h = build_tfi(8).unwrap();
        let raw = h.eigenvalues();
        let hn = normalize_and_shift(&h).unwrap();
        let ev = hn.eigenvalues();
        assert!(ev[0] >= PI / 4.0 - 1e-10);
        assert!(*ev.last().unwrap() <= 3.0 * PI / 4.0 + 1e-10);
        for (a, b) in raw.iter().zip(&ev) {
            assert_abs_diff_eq!(hn.energy_map().forward(*a), *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn alpha_family_values() {
        for (alpha, p0) in [(0.5, 0.5), (0.125, 0.88), (0.25, 0.75)] {
            let w = alpha_weights(alpha, 10).unwrap();
            assert_abs_diff_eq!(w[0], p0, epsilon = 5e-3);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(alpha_weights(1.0, 10).unwrap_err().is_config());
        assert!(alpha_weights(0.0, 10).unwrap_err().is_config());
    }

    #[test]
    fn spectrum_for_alpha_on_tfi() {
        let h = normalize_and_shift(&build_tfi(8).unwrap()).unwrap();
        let s = spectrum_for_alpha(&h, 0.125, 10).unwrap();
        assert_eq!(s.len(), 256);
        assert!(s.overlaps()[10..].iter().all(|&p| p == 0.0));
        assert!(s.energies().iter().all(|&e| (PI / 4.0 - 1e-10..=3.0 * PI / 4.0 + 1e-10).contains(&e)));
        assert_eq!(s.ground_energy(), s.energies()[0]);
    }

    #[test]
    fn spectrum_validation_and_merge() {
        assert!(Spectrum::new(vec![1.0, 0.5], vec![0.5, 0.5]).is_err());
        assert!(Spectrum::new(vec![1.0], vec![0.9]).is_err());
        let s = Spectrum::new(vec![0.1, 0.1, 0.4], vec![0.25, 0.25, 0.5]).unwrap();
        let m = s.merged(1e-12);
        assert_eq!(m.energies(), &[0.1, 0.4]);
        assert_eq!(m.overlaps(), &[0.5, 0.5]);
    }

    #[test]
    fn eigenvectors_have_fixed_phase() {
        let h = build_fermi_hubbard(2, 4.0).unwrap();
        let a = h.eigen();
        let b = h.eigen();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
        for col in a.vectors.column_iter() {
            let first = col.iter().find(|c| c.norm() > 1e-12).unwrap();
            assert!(first.re > 0.0 && first.im.abs() < 1e-15);
        }
    }

    #[test]
    fn load_text_and_binary_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let txt = dir.path().join("h.txt");
        std::fs::write(&txt, "1 0, 0 -1\n0 1, -1 0\n").unwrap();
        let h = load_matrix(&txt).unwrap();
        assert_eq!(h.dim(), 2);
        let ev = h.eigenvalues();
        assert_abs_diff_eq!(ev[0], -2f64.sqrt(), epsilon = 1e-12);

        let bin = dir.path().join("h.bin");
        let vals = [1.0f64, 0.0, 0.0, -1.0, 0.0, 1.0, -1.0, 0.0];
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&bin, bytes).unwrap();
        assert_eq!(load_matrix(&bin).unwrap().eigenvalues(), ev);

        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "1 0 2 0\n3 0 4 0\n").unwrap();
        assert!(load_matrix(&bad).unwrap_err().is_config());
    }
}
