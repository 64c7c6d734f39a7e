//! B-spline finite elements on uniform dyadic meshes of `[0, 1]^d`.
//!
//! The model problems are `-Δu = f` (d = 1, 2) and `u'''' = f` (d = 1) with
//! homogeneous Dirichlet data, enforced strongly by deleting the boundary
//! basis functions. All setup arithmetic runs in [`ExtFloat`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rug::{Float, Rational};
use thiserror::Error;

use crate::ext::{gauss_legendre, pi, BandedLdlt, ExtError, ExtFloat};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FemError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Solve(#[from] ExtError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pde {
    Poisson,
    Biharmonic,
}

impl Pde {
    /// Order `m` of the bilinear form (half the PDE order).
    pub fn order(self) -> usize {
        match self {
            Pde::Poisson => 1,
            Pde::Biharmonic => 2,
        }
    }
}

impl fmt::Display for Pde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pde::Poisson => "poisson",
            Pde::Biharmonic => "biharmonic",
        })
    }
}

impl FromStr for Pde {
    type Err = FemError;
    fn from_str(s: &str) -> Result<Pde, FemError> {
        match s {
            "poisson" => Ok(Pde::Poisson),
            "biharmonic" => Ok(Pde::Biharmonic),
            _ => Err(FemError::InvalidSpec(format!("unknown pde {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wave {
    Sin,
    Cos,
}

/// `num/den * π^pi_pow * wave(k π x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrigTerm {
    pub num: i64,
    pub den: i64,
    pub pi_pow: u32,
    pub wave: Wave,
    pub k: u32,
}

/// Finite sum of [`TrigTerm`]s; closed under differentiation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrigPoly {
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn sin(k: u32) -> TrigPoly {
        TrigPoly { terms: vec![TrigTerm { num: 1, den: 1, pi_pow: 0, wave: Wave::Sin, k }] }
    }

    pub fn derivative(&self) -> TrigPoly {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.k != 0)
            .map(|t| {
                let (wave, sign) = match t.wave {
                    Wave::Sin => (Wave::Cos, 1),
                    Wave::Cos => (Wave::Sin, -1),
                };
                TrigTerm { num: sign * t.num * i64::from(t.k), den: t.den, pi_pow: t.pi_pow + 1, wave, k: t.k }
            })
            .collect();
        TrigPoly { terms }
    }

    pub fn nth_derivative(&self, n: usize) -> TrigPoly {
        (0..n).fold(self.clone(), |g, _| g.derivative())
    }

    pub fn scaled(&self, num: i64) -> TrigPoly {
        TrigPoly { terms: self.terms.iter().map(|t| TrigTerm { num: t.num * num, ..*t }).collect() }
    }

    pub fn eval(&self, x: &Float, pi: &Float) -> Float {
        let prec = pi.prec();
        let mut acc = Float::new(prec);
        for t in &self.terms {
            let arg = Float::with_val(prec, x * pi) * t.k;
            let w = match t.wave {
                Wave::Sin => arg.sin(),
                Wave::Cos => arg.cos(),
            };
            let mut c = Float::with_val(prec, t.num) / t.den;
            for _ in 0..t.pi_pow {
                c *= pi;
            }
            acc += c * w;
        }
        acc
    }
}

/// Closed-form solution `u(x)` or `u(x) u(y)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Manufactured {
    pub name: String,
    pub x: TrigPoly,
    pub y: Option<TrigPoly>,
}

impl Manufactured {
    /// `u = sin(3πx)`.
    pub fn sine() -> Manufactured {
        Manufactured { name: "sin3".into(), x: TrigPoly::sin(3), y: None }
    }

    /// `u = sin(2πx) sin(3πy)`.
    pub fn sine_2d() -> Manufactured {
        Manufactured { name: "sin2sin3".into(), x: TrigPoly::sin(2), y: Some(TrigPoly::sin(3)) }
    }

    /// `u = sin²(πx) = 1/2 - cos(2πx)/2`; satisfies `u = u' = 0` at both ends.
    pub fn sine_squared() -> Manufactured {
        let terms = vec![
            TrigTerm { num: 1, den: 2, pi_pow: 0, wave: Wave::Cos, k: 0 },
            TrigTerm { num: -1, den: 2, pi_pow: 0, wave: Wave::Cos, k: 2 },
        ];
        Manufactured { name: "sinsq".into(), x: TrigPoly { terms }, y: None }
    }

    pub fn default_for(pde: Pde, dim: usize) -> Manufactured {
        match (pde, dim) {
            (Pde::Poisson, 2) => Manufactured::sine_2d(),
            _ => Manufactured::sine_squared(),
        }
    }

    pub fn by_name(name: &str) -> Option<Manufactured> {
        match name {
            "sin3" => Some(Manufactured::sine()),
            "sin2sin3" => Some(Manufactured::sine_2d()),
            "sinsq" => Some(Manufactured::sine_squared()),
            _ => None,
        }
    }

    pub fn eval(&self, x: &Float, y: Option<&Float>, pi: &Float) -> Float {
        let ux = self.x.eval(x, pi);
        match (&self.y, y) {
            (Some(g), Some(y)) => ux * g.eval(y, pi),
            _ => ux,
        }
    }
}

/// Number of quadrature points per element and direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Quadrature {
    /// Load vector rule; default `p + 1`.
    pub load: Option<usize>,
    /// Energy-error rule; default `p + 3`.
    pub error: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProblemSpec {
    pub pde: Pde,
    pub dim: usize,
    pub degree: usize,
    pub level: u32,
    pub solution: Manufactured,
    pub quadrature: Quadrature,
}

impl ProblemSpec {
    pub fn new(pde: Pde, dim: usize, degree: usize, level: u32) -> Result<ProblemSpec, FemError> {
        let spec = ProblemSpec {
            pde,
            dim,
            degree,
            level,
            solution: Manufactured::default_for(pde, dim),
            quadrature: Quadrature::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        let bad = |msg: String| Err(FemError::InvalidSpec(msg));
        if self.dim != 1 && self.dim != 2 {
            return bad(format!("dimension {}", self.dim));
        }
        match self.pde {
            Pde::Biharmonic if self.dim != 1 => return bad("biharmonic is one-dimensional".into()),
            Pde::Biharmonic if self.degree < 3 => return bad("biharmonic needs p >= 3".into()),
            Pde::Poisson if self.degree < 1 => return bad("poisson needs p >= 1".into()),
            _ => {}
        }
        if self.level < 1 || self.level > 20 {
            return bad(format!("level {}", self.level));
        }
        if self.solution.y.is_some() != (self.dim == 2) {
            return bad("manufactured solution does not match the dimension".into());
        }
        if self.dofs_1d() == 0 {
            return bad(format!("no interior basis functions at level {}", self.level));
        }
        Ok(())
    }

    pub fn with_level(&self, level: u32) -> ProblemSpec {
        ProblemSpec { level, ..self.clone() }
    }

    pub fn m(&self) -> usize {
        self.pde.order()
    }

    /// Spline order `k = p + 1`.
    pub fn k(&self) -> usize {
        self.degree + 1
    }

    pub fn elements(&self) -> usize {
        1 << self.level
    }

    /// Interior basis functions per direction.
    pub fn dofs_1d(&self) -> usize {
        (self.elements() + self.degree).saturating_sub(2 * self.m())
    }

    pub fn dofs(&self) -> usize {
        self.dofs_1d().pow(self.dim as u32)
    }

    pub fn load_points(&self) -> usize {
        self.quadrature.load.unwrap_or(self.degree + 1)
    }

    pub fn error_points(&self) -> usize {
        self.quadrature.error.unwrap_or(self.degree + 3)
    }
}

/// Values and derivatives of the `p + 1` B-splines that are nonzero on the
/// knot span `[t_span, t_span+1)`, as `ders[k][r]` for basis `span - p + r`.
pub fn basis_derivatives(knots: &[Float], span: usize, x: &Float, p: usize, nd: usize) -> Vec<Vec<Float>> {
    let prec = x.prec();
    let zero = || Float::new(prec);
    let mut ndu = vec![vec![zero(); p + 1]; p + 1];
    let mut left = vec![zero(); p + 1];
    let mut right = vec![zero(); p + 1];
    ndu[0][0] = Float::with_val(prec, 1);
    for j in 1..=p {
        left[j] = Float::with_val(prec, x - &knots[span + 1 - j]);
        right[j] = Float::with_val(prec, &knots[span + j] - x);
        let mut saved = zero();
        for r in 0..j {
            ndu[j][r] = Float::with_val(prec, &right[r + 1] + &left[j - r]);
            let temp = Float::with_val(prec, &ndu[r][j - 1] / &ndu[j][r]);
            ndu[r][j] = Float::with_val(prec, &right[r + 1] * &temp) + &saved;
            saved = Float::with_val(prec, &left[j - r] * &temp);
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![zero(); p + 1]; nd + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p].clone();
    }
    let pi = p as isize;
    let mut a = vec![vec![zero(); p + 1]; 2];
    for r in 0..=pi {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = Float::with_val(prec, 1);
        for k in 1..=(nd as isize).min(pi) {
            let mut d = zero();
            let rk = r - k;
            let pk = pi - k;
            if r >= k {
                a[s2][0] = Float::with_val(prec, &a[s1][0] / &ndu[(pk + 1) as usize][rk as usize]);
                d = Float::with_val(prec, &a[s2][0] * &ndu[rk as usize][pk as usize]);
            }
            let j1 = if rk >= -1 { 1 } else { -rk };
            let j2 = if r - 1 <= pk { k - 1 } else { pi - r };
            for j in j1..=j2 {
                let (ju, rkj) = (j as usize, (rk + j) as usize);
                a[s2][ju] = Float::with_val(prec, &a[s1][ju] - &a[s1][ju - 1]) / &ndu[(pk + 1) as usize][rkj];
                d += Float::with_val(prec, &a[s2][ju] * &ndu[rkj][pk as usize]);
            }
            if r <= pk {
                let ku = k as usize;
                a[s2][ku] = -Float::with_val(prec, &a[s1][ku - 1] / &ndu[(pk + 1) as usize][r as usize]);
                d += Float::with_val(prec, &a[s2][ku] * &ndu[r as usize][pk as usize]);
            }
            ders[k as usize][r as usize] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as u32;
    for (k, row) in ders.iter_mut().enumerate().skip(1) {
        if k > p {
            break;
        }
        for v in row.iter_mut() {
            *v *= factor;
        }
        factor *= (p - k) as u32;
    }
    ders
}

/// Open uniform B-spline basis of degree `p` with `2^level` elements.
#[derive(Debug, Clone)]
pub struct Basis1d {
    pub degree: usize,
    pub elements: usize,
    /// Leading and trailing basis functions removed by the boundary conditions.
    pub drop: usize,
    pub knots: Vec<Float>,
    prec: u32,
}

impl Basis1d {
    pub fn new(degree: usize, level: u32, drop: usize, prec: u32) -> Basis1d {
        let elements = 1usize << level;
        let mut knots = Vec::with_capacity(elements + 2 * degree + 1);
        knots.extend((0..degree).map(|_| Float::new(prec)));
        for i in 0..=elements {
            knots.push(Float::with_val(prec, i) / elements as u32);
        }
        knots.extend((0..degree).map(|_| Float::with_val(prec, 1)));
        Basis1d { degree, elements, drop, knots, prec }
    }

    pub fn full_dim(&self) -> usize {
        self.elements + self.degree
    }

    pub fn dim(&self) -> usize {
        self.full_dim() - 2 * self.drop
    }

    fn interior(&self, g: usize) -> Option<usize> {
        (g >= self.drop && g < self.full_dim() - self.drop).then(|| g - self.drop)
    }

    /// Quadrature points, weights and basis derivatives up to `nd` on element `e`.
    fn element_rule(&self, e: usize, nodes: &[Float], weights: &[Float], nd: usize) -> Vec<(Float, Float, Vec<Vec<Float>>)> {
        let prec = self.prec;
        let h = Float::with_val(prec, 1) / self.elements as u32;
        let x0 = Float::with_val(prec, &h * e as u32);
        nodes
            .iter()
            .zip(weights)
            .map(|(xi, wi)| {
                let t = Float::with_val(prec, xi + 1u32) / 2u32;
                let x = Float::with_val(prec, &t * &h) + &x0;
                let w = Float::with_val(prec, wi * &h) / 2u32;
                let ders = basis_derivatives(&self.knots, e + self.degree, &x, self.degree, nd);
                (x, w, ders)
            })
            .collect()
    }

    /// Interior Gram matrix `∫ φ_i^(d) φ_j^(d)` with `nq` points per element,
    /// assembled on the upper triangle and mirrored.
    pub fn gram(&self, d: usize, nq: usize) -> CsrMatrix<Float> {
        let (nodes, weights) = gauss_legendre(nq, self.prec);
        let p = self.degree;
        let n = self.dim();
        // band[i][o] = G[i][i + o]
        let mut band = vec![vec![Float::new(self.prec); p + 1]; n];
        for e in 0..self.elements {
            for (_, w, ders) in self.element_rule(e, &nodes, &weights, d) {
                for a in 0..=p {
                    let Some(ia) = self.interior(e + a) else { continue };
                    let wa = Float::with_val(self.prec, &w * &ders[d][a]);
                    for b in a..=p {
                        let Some(ib) = self.interior(e + b) else { continue };
                        band[ia][ib - ia] += &wa * &ders[d][b];
                    }
                }
            }
        }
        let mut triplets = Vec::with_capacity(n * (2 * p + 1));
        for (i, row) in band.into_iter().enumerate() {
            for (o, v) in row.into_iter().enumerate() {
                if i + o >= n {
                    break;
                }
                if o > 0 {
                    triplets.push((i + o, i, v.clone()));
                }
                triplets.push((i, i + o, v));
            }
        }
        CsrMatrix::from_triplets(n, n, triplets, |_, _| unreachable!())
    }

    /// `∫ g φ_i^(d)` for every interior basis function.
    pub fn project(&self, g: &TrigPoly, d: usize, nq: usize, pi: &Float) -> Vec<Float> {
        let (nodes, weights) = gauss_legendre(nq, self.prec);
        let mut out = vec![Float::new(self.prec); self.dim()];
        for e in 0..self.elements {
            for (x, w, ders) in self.element_rule(e, &nodes, &weights, d) {
                let gw = g.eval(&x, pi) * &w;
                for (a, v) in ders[d].iter().enumerate() {
                    if let Some(i) = self.interior(e + a) {
                        out[i] += Float::with_val(self.prec, &gw * v);
                    }
                }
            }
        }
        out
    }

    /// `∫ g²` with `nq` points per element.
    pub fn integrate_square(&self, g: &TrigPoly, nq: usize, pi: &Float) -> Float {
        let (nodes, weights) = gauss_legendre(nq, self.prec);
        let h = Float::with_val(self.prec, 1) / self.elements as u32;
        let mut acc = Float::new(self.prec);
        for e in 0..self.elements {
            for (xi, wi) in nodes.iter().zip(&weights) {
                let t = Float::with_val(self.prec, xi + 1u32) / 2u32;
                let x = (Float::with_val(self.prec, e) + t) * &h;
                let v = g.eval(&x, pi);
                acc += Float::with_val(self.prec, v.square_ref()) * wi;
            }
        }
        acc * h / 2u32
    }

    /// Spline value `Σ c_i φ_i(x)` over interior coefficients.
    pub fn evaluate(&self, coeffs: &[Float], x: &Float) -> Float {
        let e = {
            let scaled = Float::with_val(self.prec, x * self.elements as u32).floor();
            (scaled.to_f64().max(0.0) as usize).min(self.elements - 1)
        };
        let ders = basis_derivatives(&self.knots, e + self.degree, x, self.degree, 0);
        let mut acc = Float::new(self.prec);
        for (a, v) in ders[0].iter().enumerate() {
            if let Some(i) = self.interior(e + a) {
                acc += Float::with_val(self.prec, v * &coeffs[i]);
            }
        }
        acc
    }
}

/// Dyadic refinement matrix (fine × coarse) between the interior bases of
/// levels `level - 1` and `level`, by the discrete B-spline recursion.
pub fn prolongation_1d(degree: usize, level: u32, drop: usize, prec: u32) -> CsrMatrix<Float> {
    assert!(level >= 1);
    let coarse = Basis1d::new(degree, level - 1, drop, prec);
    let fine = Basis1d::new(degree, level, drop, prec);
    let exact = |knots: &[Float]| -> Vec<Rational> { knots.iter().map(|k| k.to_rational().unwrap()).collect() };
    let tau = exact(&coarse.knots);
    let t = exact(&fine.knots);
    let (nc, nf, p) = (coarse.full_dim(), fine.full_dim(), degree);
    let frac = |num: Rational, den: Rational| if den == 0 { Rational::new() } else { num / den };
    let mut triplets = Vec::new();
    for i in 0..nf {
        // alpha[j] = α_{j,d}(i) for all coarse j, rebuilt per degree
        let mut alpha: Vec<Rational> =
            (0..nc + p).map(|j| if tau[j] <= t[i] && t[i] < tau[j + 1] { Rational::from(1) } else { Rational::new() }).collect();
        for d in 1..=p {
            let x = &t[i + d];
            let next: Vec<Rational> = (0..nc + p - d)
                .map(|j| {
                    let w1 = frac(Rational::from(x - &tau[j]), Rational::from(&tau[j + d] - &tau[j]));
                    let w2 = frac(Rational::from(&tau[j + d + 1] - x), Rational::from(&tau[j + d + 1] - &tau[j + 1]));
                    w1 * &alpha[j] + w2 * &alpha[j + 1]
                })
                .collect();
            alpha = next;
        }
        let Some(fi) = fine.interior(i) else { continue };
        for (j, a) in alpha.iter().enumerate().take(nc) {
            if *a == 0 {
                continue;
            }
            if let Some(cj) = coarse.interior(j) {
                triplets.push((fi, cj, Float::with_val(prec, a)));
            }
        }
    }
    CsrMatrix::from_triplets(fine.dim(), coarse.dim(), triplets, |_, _| unreachable!())
}

/// Prolongation from level `spec.level - 1` to `spec.level`.
pub fn prolongation(spec: &ProblemSpec, prec: u32) -> CsrMatrix<Float> {
    let p1 = prolongation_1d(spec.degree, spec.level, spec.m(), prec);
    if spec.dim == 2 {
        CsrMatrix::kron(&p1, &p1, prec)
    } else {
        p1
    }
}

/// `‖u - Σ c_i φ_i‖_L` evaluated as `sqrt(a(u,u) - 2 gᵀc + cᵀAc)` where all
/// three pieces come from the same per-element quadrature.
#[derive(Debug, Clone)]
pub struct EnergyFunctional {
    uu: Float,
    g: Vec<Float>,
    a: Arc<CsrMatrix<Float>>,
    prec: u32,
}

impl EnergyFunctional {
    pub fn norm_u(&self) -> Float {
        Float::with_val(self.prec, self.uu.sqrt_ref())
    }

    /// `a(u, φ_i)`.
    pub fn rhs(&self) -> &[Float] {
        &self.g
    }

    pub fn error(&self, coeffs: &[Float]) -> Float {
        let prec = self.prec;
        let ac = self.a.mul_vec(coeffs, prec);
        let mut e2 = self.uu.clone();
        for ((c, gi), aci) in coeffs.iter().zip(&self.g).zip(&ac) {
            e2 -= Float::with_val(prec, c * gi) * 2u32;
            e2 += Float::with_val(prec, c * aci);
        }
        if e2 < 0 {
            e2 = Float::new(prec);
        }
        e2.sqrt()
    }
}

/// One discretized level: stiffness, load and error functional.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub spec: ProblemSpec,
    pub prec: u32,
    pub a: Arc<CsrMatrix<Float>>,
    pub b: Vec<Float>,
    pub energy: EnergyFunctional,
    pub basis: Basis1d,
}

impl Discretization {
    pub fn new(spec: &ProblemSpec, prec: u32) -> Result<Discretization, FemError> {
        spec.validate()?;
        let m = spec.m();
        let basis = Basis1d::new(spec.degree, spec.level, m, prec);
        let pi = pi(prec);
        let nq = spec.degree + 1;
        let (nl, ne) = (spec.load_points(), spec.error_points());
        let u = &spec.solution;
        let (a, b, uu, g) = if spec.dim == 1 {
            let a = basis.gram(m, nq);
            let sign = if m % 2 == 0 { 1 } else { -1 };
            let f = u.x.nth_derivative(2 * m).scaled(sign);
            let b = basis.project(&f, 0, nl, &pi);
            let um = u.x.nth_derivative(m);
            let uu = basis.integrate_square(&um, ne, &pi);
            let g = basis.project(&um, m, ne, &pi);
            (a, b, uu, g)
        } else {
            let uy = u.y.as_ref().expect("2D solution");
            let k = basis.gram(1, nq);
            let mass = basis.gram(0, nq);
            let a = CsrMatrix::kron(&mass, &k, prec).add(&CsrMatrix::kron(&k, &mass, prec));
            // -Δu = -(u_x'' u_y + u_x u_y''), separable per term
            let bx2 = basis.project(&u.x.nth_derivative(2), 0, nl, &pi);
            let bx0 = basis.project(&u.x, 0, nl, &pi);
            let by2 = basis.project(&uy.nth_derivative(2), 0, nl, &pi);
            let by0 = basis.project(uy, 0, nl, &pi);
            let b = outer_sum(&by0, &bx2, &by2, &bx0, prec).into_iter().map(|v| -v).collect();
            let (dx, dy) = (u.x.derivative(), uy.derivative());
            let uu = Float::with_val(prec, basis.integrate_square(&dx, ne, &pi) * basis.integrate_square(uy, ne, &pi))
                + basis.integrate_square(&u.x, ne, &pi) * basis.integrate_square(&dy, ne, &pi);
            let gx1 = basis.project(&dx, 1, ne, &pi);
            let gx0 = basis.project(&u.x, 0, ne, &pi);
            let gy1 = basis.project(&dy, 1, ne, &pi);
            let gy0 = basis.project(uy, 0, ne, &pi);
            let g = outer_sum(&gy0, &gx1, &gy1, &gx0, prec);
            (a, b, uu, g)
        };
        let a = Arc::new(a);
        let energy = EnergyFunctional { uu, g, a: Arc::clone(&a), prec };
        Ok(Discretization { spec: spec.clone(), prec, a, b, energy, basis })
    }

    pub fn energy_error(&self, coeffs: &[Float]) -> Float {
        self.energy.error(coeffs)
    }

    /// Direct banded `L D Lᵀ` solve of `A u = b`.
    pub fn reference_solve(&self) -> Result<Vec<ExtFloat>, FemError> {
        let f = BandedLdlt::factor(&self.a, self.prec)?;
        Ok(f.solve(&self.b))
    }
}

/// `v[(iy, ix)] = y1[iy] x1[ix] + y2[iy] x2[ix]` with `ix` running fastest.
fn outer_sum(y1: &[Float], x1: &[Float], y2: &[Float], x2: &[Float], prec: u32) -> Vec<Float> {
    let mut out = Vec::with_capacity(y1.len() * x1.len());
    for (a1, a2) in y1.iter().zip(y2) {
        for (b1, b2) in x1.iter().zip(x2) {
            out.push(Float::with_val(prec, a1 * b1) + Float::with_val(prec, a2 * b2));
        }
    }
    out
}

pub fn gauss_legendre_rule(nq: usize, prec: u32) -> (Vec<Float>, Vec<Float>) {
    gauss_legendre(nq, prec)
}

/// Stiffness matrix and load vector of `spec`.
pub fn assemble(spec: &ProblemSpec, prec: u32) -> Result<(Arc<CsrMatrix<Float>>, Vec<Float>), FemError> {
    let d = Discretization::new(spec, prec)?;
    Ok((d.a, d.b))
}

/// Reference solution of `spec` at precision `prec`.
pub fn reference_solve(spec: &ProblemSpec, prec: u32) -> Result<Vec<ExtFloat>, FemError> {
    Discretization::new(spec, prec)?.reference_solve()
}
