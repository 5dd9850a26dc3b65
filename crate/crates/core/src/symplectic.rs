//! Gaussian-state algebra on quadrature covariance matrices.
//!
//! Quadratures are ordered `(Q₁, P₁, Q₂, P₂, …)` and the symplectic form is
//! block diagonal with 2×2 blocks `[[0, 1], [−1, 0]]`. Symplectic spectra can
//! be obtained three ways:
//!
//! * [`symplectic_eigenvalues_spectral`], a general route for any mode count;
//! * [`symplectic_eigenvalues_two_mode`], the closed form for the standard
//!   two-mode form `[[a·I, c·σz], [c·σz, b·I]]`;
//! * [`symplectic_eigenvalues_minor_route`], solving the quartic built from
//!   the four-mode symplectic invariants.

use nalgebra::{Complex, DMatrix, Matrix4, Rotation3, Schur, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetry tolerance (absolute, scaled by the largest entry).
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Uncertainty-principle tolerance on symplectic eigenvalues.
pub const PHYSICAL_TOL: f64 = 1e-9;

/// Relative cutoff below which singular values are dropped by the
/// Moore–Penrose inverse.
pub const PINV_RCOND: f64 = 1e-12;

/// Real symmetric `2n×2n` covariance matrix in shot-noise units.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    data: DMatrix<f64>,
}

impl CovMatrix {
    /// Validates shape and symmetry; the stored matrix is exactly symmetrised.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (r, c) = data.shape();
        if r != c || r == 0 || r % 2 != 0 {
            return Err(Error::InvalidMatrix(format!(
                "covariance matrix must be square with even dimension, got {r}×{c}"
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("covariance matrix has non-finite entries".into()));
        }
        let scale = data.amax().max(1.0);
        let asym = (&data - data.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidMatrix(format!(
                "covariance matrix is not symmetric (max |γ−γᵀ| = {asym:e})"
            )));
        }
        let data = (&data + data.transpose()) * 0.5;
        Ok(Self { data })
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {dim}×{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    /// Vacuum on `modes` modes.
    pub fn vacuum(modes: usize) -> Self {
        Self {
            data: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    /// Single-mode thermal state of variance `v` on every quadrature.
    pub fn thermal(v: f64) -> Result<Self> {
        Self::new(DMatrix::identity(2, 2) * v)
    }

    /// `[[a·I, c·σz], [c·σz, b·I]]`.
    pub fn two_mode_standard(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::from_row_slice(
            4,
            &[
                a, 0.0, c, 0.0, //
                0.0, a, 0.0, -c, //
                c, 0.0, b, 0.0, //
                0.0, -c, 0.0, b,
            ],
        )
    }

    /// Pure two-mode squeezed vacuum with local variance `n ≥ 1`.
    pub fn epr(n: f64) -> Result<Self> {
        let c = (n * n - 1.0).max(0.0).sqrt();
        Self::two_mode_standard(n, n, c)
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(parts: &[&CovMatrix]) -> Self {
        let dim: usize = parts.iter().map(|p| p.dim()).sum();
        let mut data = DMatrix::zeros(dim, dim);
        let mut at = 0;
        for p in parts {
            let d = p.dim();
            data.view_mut((at, at), (d, d)).copy_from(&p.data);
            at += d;
        }
        Self { data }
    }

    /// `S·γ·Sᵀ`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.dim() || s.ncols() != self.dim() {
            return Err(Error::InvalidMatrix(format!(
                "transform is {}×{}, covariance matrix is {}×{}",
                s.nrows(),
                s.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        Self::new(s * &self.data * s.transpose())
    }

    pub fn modes(&self) -> usize {
        self.data.nrows() / 2
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[(row, col)]
    }

    /// Sub-matrix for the listed modes, in the given order.
    pub fn select_modes(&self, modes: &[usize]) -> Result<Self> {
        let n = self.modes();
        if modes.is_empty() || modes.iter().any(|&m| m >= n) {
            return Err(Error::InvalidMatrix(format!(
                "mode selection {modes:?} out of range for {n} modes"
            )));
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let k = idx.len();
        Ok(Self {
            data: DMatrix::from_fn(k, k, |i, j| self.data[(idx[i], idx[j])]),
        })
    }

    /// Symplectic spectrum via [`symplectic_eigenvalues_spectral`].
    pub fn spectrum(&self) -> Result<SymplecticSpectrum> {
        symplectic_eigenvalues_spectral(self)
    }

    /// True if every symplectic eigenvalue is at least `1 − 1e−9`.
    pub fn is_physical(&self) -> bool {
        self.spectrum().map(|s| s.is_physical()).unwrap_or(false)
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> Result<f64> {
        let spectrum = self.spectrum()?;
        if !spectrum.is_physical() {
            return Err(Error::UnphysicalMatrix(format!(
                "symplectic eigenvalue {} below 1",
                spectrum.min()
            )));
        }
        Ok(spectrum.entropy())
    }
}

/// Symplectic eigenvalues, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    values: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }

    pub fn is_physical(&self) -> bool {
        self.values.iter().all(|&v| v >= 1.0 - PHYSICAL_TOL)
    }

    /// `Σ G((ν−1)/2)`; eigenvalues inside the physical tolerance below 1 count as 1.
    pub fn entropy(&self) -> f64 {
        self.values.iter().map(|&v| g_entropy_unchecked(((v - 1.0) / 2.0).max(0.0))).sum()
    }

    /// `Π ν²`, equal to `det γ`.
    pub fn det(&self) -> f64 {
        self.values.iter().map(|v| v * v).product()
    }
}

/// `G(x) = (x+1)·log₂(x+1) − x·log₂x`, the entropy of a thermal state with
/// mean photon number `x`.
pub fn g_entropy(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("G(x) needs x >= 0, got {x}")));
    }
    Ok(g_entropy_unchecked(x))
}

fn g_entropy_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    } else {
        // Same value without cancelling two terms of size x·log₂x.
        (x + 1.0).log2() + x * (1.0 / x).ln_1p() * std::f64::consts::LOG2_E
    }
}

/// Block-diagonal symplectic form on `modes` modes.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues as the moduli of the eigenvalues `±iν` of `Ω·γ`.
///
/// With `γ = L·Lᵀ`, `Ω·γ` is similar to the antisymmetric `Lᵀ·Ω·L`, so the
/// values are read off the Hermitian matrix `i·Lᵀ·Ω·L`. This keeps the
/// absolute error at machine precision times the largest eigenvalue.
pub fn symplectic_eigenvalues_spectral(gamma: &CovMatrix) -> Result<SymplecticSpectrum> {
    let n = gamma.modes();
    let chol = gamma
        .data
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidMatrix("covariance matrix is not positive definite".into()))?;
    let l = chol.l();
    let a = l.transpose() * symplectic_form(n) * &l;
    let h: DMatrix<Complex<f64>> = a.map(|x| Complex::new(0.0, x));
    let eig = SymmetricEigen::new(h);
    let mut all: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    all.sort_by(f64::total_cmp);
    // Eigenvalues come in ±ν pairs; keep the positive half.
    Ok(SymplecticSpectrum::new(all.split_off(n)))
}

/// Closed-form eigenvalues of the standard two-mode form:
/// `λ² = (Δ ∓ √(Δ² − 4D))/2` with `Δ = a² + b² − 2c²`, `D = (ab − c²)²`.
pub fn two_mode_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let delta = a * a + b * b - 2.0 * c * c;
    let det = (a * b - c * c).powi(2);
    let disc = (delta * delta - 4.0 * det).max(0.0).sqrt();
    let upper = (delta + disc) / 2.0;
    // λ₁²·λ₂² = D; dividing avoids the cancellation in Δ − √(Δ² − 4D).
    let lower = if upper > 0.0 { det / upper } else { 0.0 };
    (lower.sqrt(), upper.sqrt())
}

/// Two-mode closed form. The matrix must be in the standard form
/// `[[a·I, c·σz], [c·σz, b·I]]`.
pub fn symplectic_eigenvalues_two_mode(gamma: &CovMatrix) -> Result<SymplecticSpectrum> {
    if gamma.modes() != 2 {
        return Err(Error::InvalidForm(format!("expected two modes, got {}", gamma.modes())));
    }
    let a = gamma.get(0, 0);
    let b = gamma.get(2, 2);
    let c = gamma.get(0, 2);
    let expected = CovMatrix::two_mode_standard(a, b, c)?;
    let dev = (&gamma.data - &expected.data).amax();
    if dev > SYMMETRY_TOL * gamma.data.amax().max(1.0) {
        return Err(Error::InvalidForm(format!(
            "deviation {dev:e} from [[a·I, c·σz], [c·σz, b·I]]"
        )));
    }
    let (l1, l2) = two_mode_eigenvalues(a, b, c);
    Ok(SymplecticSpectrum::new(vec![l1, l2]))
}

/// Iterates over all `k`-subsets of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Symplectic invariants `Δ₁ … Δₙ` of an `n`-mode covariance matrix.
///
/// `Δⱼ` is the sum of all order-`2j` principal minors of `Ω·γ`, i.e. the
/// elementary symmetric polynomial of degree `j` in the squared symplectic
/// eigenvalues. `Δₙ = det γ`.
pub fn symplectic_invariants(gamma: &CovMatrix) -> Vec<f64> {
    let n = gamma.modes();
    let dim = 2 * n;
    let m = symplectic_form(n) * &gamma.data;
    (1..=n)
        .map(|j| {
            let k = 2 * j;
            let mut total = 0.0;
            for_each_subset(dim, k, |rows| {
                let sub = DMatrix::from_fn(k, k, |r, c| m[(rows[r], rows[c])]);
                total += sub.determinant();
            });
            total
        })
        .collect()
}

/// The four invariants of a four-mode (8×8) covariance matrix.
pub fn principal_minors(gamma: &CovMatrix) -> Result<[f64; 4]> {
    if gamma.dim() != 8 {
        return Err(Error::InvalidMatrix(format!(
            "principal minors need an 8×8 matrix, got {}×{}",
            gamma.dim(),
            gamma.dim()
        )));
    }
    let d = symplectic_invariants(gamma);
    Ok([d[0], d[1], d[2], d[3]])
}

/// Symplectic eigenvalues of a four-mode matrix from the real positive roots
/// of `x⁴ − Δ₁x³ + Δ₂x² − Δ₃x + Δ₄ = 0`, `x = ν²`.
pub fn symplectic_eigenvalues_minor_route(gamma: &CovMatrix) -> Result<SymplecticSpectrum> {
    let minors = principal_minors(gamma)?;
    let roots = solve_invariant_quartic(minors)?;
    Ok(SymplecticSpectrum::new(roots.iter().map(|x| x.sqrt()).collect()))
}

/// Real non-negative roots of `x⁴ − Δ₁x³ + Δ₂x² − Δ₃x + Δ₄`.
///
/// Roots are the eigenvalues of the companion matrix (computed on a rescaled
/// variable), refined by Newton steps. Clusters that the eigen-solver cannot
/// separate (repeated roots) are replaced by their mean. Imaginary parts
/// below `1e−7·(1 + |Δ₁|)` are dropped; larger ones are unphysical.
pub fn solve_invariant_quartic(minors: [f64; 4]) -> Result<[f64; 4]> {
    let [d1, d2, d3, d4] = minors;
    if minors.iter().any(|x| !x.is_finite()) {
        return Err(Error::UnphysicalMatrix("non-finite symplectic invariants".into()));
    }
    // Monic coefficients c₃..c₀ of x⁴ + c₃x³ + c₂x² + c₁x + c₀.
    let coeffs = [-d1, d2, -d3, d4];
    // Root-magnitude scale: max |c_k|^{1/k}.
    let scale = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c.abs().powf(1.0 / (i as f64 + 1.0)))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok([0.0; 4]);
    }
    let scaled: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c / scale.powi(i as i32 + 1))
        .collect();
    #[rustfmt::skip]
    let companion = Matrix4::new(
        -scaled[0], -scaled[1], -scaled[2], -scaled[3],
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let raw: Vec<Complex<f64>> = companion_eigenvalues(companion)?
        .iter()
        .map(|z| z * scale)
        .collect();

    let imag_tol = 1e-7 * (1.0 + d1.abs());
    let clusters = cluster_roots(&raw, imag_tol);
    let poly = |x: f64| (((x + coeffs[0]) * x + coeffs[1]) * x + coeffs[2]) * x + coeffs[3];
    let dpoly = |x: f64| ((4.0 * x + 3.0 * coeffs[0]) * x + 2.0 * coeffs[1]) * x + coeffs[2];

    let mut out = Vec::with_capacity(4);
    for members in clusters {
        let mean = members.iter().fold(Complex::new(0.0, 0.0), |acc, &i| acc + raw[i]) / members.len() as f64;
        if mean.im.abs() > imag_tol {
            return Err(Error::UnphysicalMatrix(format!(
                "invariant quartic has a complex root {mean} (tolerance {imag_tol:e})"
            )));
        }
        let mut x = mean.re;
        if members.len() == 1 {
            for _ in 0..8 {
                let d = dpoly(x);
                if d == 0.0 {
                    break;
                }
                let next = x - poly(x) / d;
                if !next.is_finite() || poly(next).abs() >= poly(x).abs() {
                    break;
                }
                x = next;
            }
        }
        if x < -imag_tol {
            return Err(Error::UnphysicalMatrix(format!("invariant quartic has a negative root {x}")));
        }
        out.extend(std::iter::repeat_n(x.max(0.0), members.len()));
    }
    out.sort_by(f64::total_cmp);
    Ok([out[0], out[1], out[2], out[3]])
}

/// Eigenvalues of a 4×4 companion matrix. Francis QR can stall on
/// permutation-like companions (e.g. `x⁴ + 1`), so a failed attempt is
/// retried after an orthogonal similarity.
fn companion_eigenvalues(companion: Matrix4<f64>) -> Result<Vec<Complex<f64>>> {
    const MAX_ITER: usize = 2000;
    if let Some(schur) = Schur::try_new(companion, f64::EPSILON, MAX_ITER) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    let q = Rotation3::from_euler_angles(0.3, 0.7, 1.1);
    let mut rot = Matrix4::identity();
    rot.fixed_view_mut::<3, 3>(0, 0).copy_from(q.matrix());
    let rotated = rot.transpose() * companion * rot;
    Schur::try_new(rotated, f64::EPSILON, MAX_ITER)
        .map(|schur| schur.complex_eigenvalues().iter().copied().collect())
        .ok_or_else(|| Error::UnphysicalMatrix("companion eigenvalue iteration did not converge".into()))
}

/// Groups roots that belong to one numerically-split multiple root: the pair
/// must be within `1e−3` relative distance and either one of them is visibly
/// complex or they are closer than `1e−6` relative.
fn cluster_roots(roots: &[Complex<f64>], imag_tol: f64) -> Vec<Vec<usize>> {
    let n = roots.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            let scale = roots[i].norm().max(roots[j].norm()).max(1.0);
            let dist = (roots[i] - roots[j]).norm();
            let complex = roots[i].im.abs() > imag_tol || roots[j].im.abs() > imag_tol;
            if dist <= 1e-3 * scale && (complex || dist <= 1e-6 * scale) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Pseudo-inverse with singular values below `1e−12·σ_max` treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(DMatrix::zeros(m.ncols(), m.nrows()));
    }
    svd.pseudo_inverse(PINV_RCOND * smax)
        .map_err(|e| Error::InvalidMatrix(e.to_string()))
}

/// Gaussian conditioning on a measurement of both quadratures of the
/// measured modes: `γ − σ·(X·γ_meas·X)^MP·σᵀ` with `X = I`.
///
/// `cross` is the `dim(γ) × dim(γ_meas)` cross-covariance between the kept
/// modes and the measured ones.
pub fn condition_on_modes(gamma: &CovMatrix, cross: &DMatrix<f64>, measured: &DMatrix<f64>) -> Result<CovMatrix> {
    if measured.nrows() != measured.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "measured covariance must be square, got {}×{}",
            measured.nrows(),
            measured.ncols()
        )));
    }
    if cross.nrows() != gamma.dim() || cross.ncols() != measured.nrows() {
        return Err(Error::InvalidMatrix(format!(
            "cross block is {}×{}, expected {}×{}",
            cross.nrows(),
            cross.ncols(),
            gamma.dim(),
            measured.nrows()
        )));
    }
    let pinv = pseudo_inverse(measured)?;
    CovMatrix::new(&gamma.data - cross * pinv * cross.transpose())
}

/// Symplectic transforms used to build test states and check purity.
pub mod transforms {
    use nalgebra::DMatrix;

    /// Beam splitter of transmission `t` mixing modes `i` and `j`.
    pub fn beam_splitter(modes: usize, i: usize, j: usize, t: f64) -> DMatrix<f64> {
        let mut s = DMatrix::identity(2 * modes, 2 * modes);
        let (ct, st) = (t.sqrt(), (1.0 - t).sqrt());
        for q in 0..2 {
            let (a, b) = (2 * i + q, 2 * j + q);
            s[(a, a)] = ct;
            s[(a, b)] = st;
            s[(b, a)] = -st;
            s[(b, b)] = ct;
        }
        s
    }

    /// Two-mode squeezer with squeezing parameter `r` on modes `i`, `j`.
    pub fn two_mode_squeezer(modes: usize, i: usize, j: usize, r: f64) -> DMatrix<f64> {
        let mut s = DMatrix::identity(2 * modes, 2 * modes);
        let (ch, sh) = (r.cosh(), r.sinh());
        for (q, sign) in [(0, 1.0), (1, -1.0)] {
            let (a, b) = (2 * i + q, 2 * j + q);
            s[(a, a)] = ch;
            s[(b, b)] = ch;
            s[(a, b)] = sign * sh;
            s[(b, a)] = sign * sh;
        }
        s
    }

    /// Single-mode squeezer `diag(e^{−r}, e^{r})` on mode `i`.
    pub fn squeezer(modes: usize, i: usize, r: f64) -> DMatrix<f64> {
        let mut s = DMatrix::identity(2 * modes, 2 * modes);
        s[(2 * i, 2 * i)] = (-r).exp();
        s[(2 * i + 1, 2 * i + 1)] = r.exp();
        s
    }

    /// Phase rotation by `theta` on mode `i`.
    pub fn rotation(modes: usize, i: usize, theta: f64) -> DMatrix<f64> {
        let mut s = DMatrix::identity(2 * modes, 2 * modes);
        let (c, sn) = (theta.cos(), theta.sin());
        s[(2 * i, 2 * i)] = c;
        s[(2 * i, 2 * i + 1)] = sn;
        s[(2 * i + 1, 2 * i)] = -sn;
        s[(2 * i + 1, 2 * i + 1)] = c;
        s
    }
}
