//! Exact discrete optimal transport: plans, maps, geodesics and the
//! geodesic retraction onto a Wasserstein ball.

mod network_simplex;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::{DiscreteMeasure, Measure, VelocityField};

/// Mass below `SPLIT_TOL * w_i` in a plan row is treated as solver noise.
const SPLIT_TOL: f64 = 1e-12;

/// Optimal coupling of two discrete measures together with LP duals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub gamma: DMatrix<f64>,
    /// `sum_ij gamma_ij c_ij` for the cost the plan was solved with.
    pub cost: f64,
    /// Source potentials; `phi_i + psi_j <= c_ij` with equality on the support.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl TransportPlan {
    /// Nonzero entries `(i, j, gamma_ij)` in row-major order.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.gamma.nrows() {
            for j in 0..self.gamma.ncols() {
                let g = self.gamma[(i, j)];
                if g > 0.0 {
                    out.push((i, j, g));
                }
            }
        }
        out
    }

    /// Recomputes `sum gamma_ij |x_i - y_j|^2` from the atoms.
    pub fn squared_distance_cost(&self) -> f64 {
        self.support()
            .into_iter()
            .map(|(i, j, g)| g * (&self.source.atoms()[i] - &self.target.atoms()[j]).norm_squared())
            .sum()
    }
}

/// Map `x_i -> T(x_i)` defined on the atoms of `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub base: DiscreteMeasure,
    pub images: Vec<DVector<f64>>,
    /// True when every plan row had a single nonzero entry, so `images` is a
    /// genuine map rather than a barycentric projection.
    pub deterministic: bool,
}

impl TransportMap {
    pub fn identity(base: &DiscreteMeasure) -> Self {
        Self { base: base.clone(), images: base.atoms().to_vec(), deterministic: true }
    }

    /// `T#base`.
    pub fn pushforward(&self) -> DiscreteMeasure {
        DiscreteMeasure::from_parts_unchecked(self.images.clone(), self.base.weights().to_vec())
    }

    /// `T - Id` as a field over the base atoms.
    pub fn displacement(&self) -> VelocityField {
        let v = self.images.iter().zip(self.base.atoms()).map(|(t, x)| t - x).collect();
        VelocityField::new(&self.base, v).expect("map images match base atoms")
    }

    /// `|T - Id|_{L^2(base)}`.
    pub fn displacement_norm(&self) -> f64 {
        self.displacement().norm()
    }
}

pub fn squared_distance_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> DMatrix<f64> {
    DMatrix::from_fn(mu.len(), nu.len(), |i, j| (&mu.atoms()[i] - &nu.atoms()[j]).norm_squared())
}

fn check_dims(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
    }
    Ok(())
}

/// Optimal plan for the squared Euclidean cost.
pub fn solve_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportPlan> {
    check_dims(mu, nu)?;
    solve_ot_with_cost(mu, nu, &squared_distance_matrix(mu, nu))
}

/// Optimal plan for an arbitrary `n x m` cost matrix.
pub fn solve_ot_with_cost(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &DMatrix<f64>,
) -> Result<TransportPlan> {
    let (n, m) = (mu.len(), nu.len());
    if cost.nrows() != n || cost.ncols() != m {
        return Err(Error::DimensionMismatch { expected: n * m, found: cost.len() });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInstance("non-finite transport cost".into()));
    }
    let row_major: Vec<f64> = (0..n).flat_map(|i| (0..m).map(move |j| cost[(i, j)])).collect();
    let sol = network_simplex::solve_transport(mu.weights(), nu.weights(), &row_major);
    Ok(TransportPlan {
        source: mu.clone(),
        target: nu.clone(),
        gamma: DMatrix::from_row_slice(n, m, &sol.flow),
        cost: sol.cost,
        phi: sol.phi,
        psi: sol.psi,
    })
}

pub fn w2_discrete(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    Ok(solve_ot(mu, nu)?.cost.max(0.0).sqrt())
}

/// Wasserstein-2 distance; Gaussian pairs use the closed Bures form.
pub fn w2(mu: &Measure, nu: &Measure) -> Result<f64> {
    match (mu, nu) {
        (Measure::Discrete(a), Measure::Discrete(b)) => w2_discrete(a, b),
        (Measure::Gaussian(a), Measure::Gaussian(b)) => {
            if a.dim() != b.dim() {
                return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
            }
            Ok(linalg::bures_w2_squared(a.mean(), a.cov(), b.mean(), b.cov()).sqrt())
        }
        _ => Err(Error::MixedRepresentation),
    }
}

/// Reads a map off a plan; split rows fall back to the barycentric projection.
pub fn extract_map(plan: &TransportPlan) -> TransportMap {
    let d = plan.target.dim();
    let mut deterministic = true;
    let images = (0..plan.gamma.nrows())
        .map(|i| {
            let wi = plan.source.weights()[i];
            let mut nonzero = 0;
            let mut mass = 0.0;
            let mut y = DVector::zeros(d);
            for j in 0..plan.gamma.ncols() {
                let g = plan.gamma[(i, j)];
                if g > SPLIT_TOL * wi {
                    nonzero += 1;
                }
                if g > 0.0 {
                    mass += g;
                    y.axpy(g, &plan.target.atoms()[j], 1.0);
                }
            }
            if nonzero > 1 {
                deterministic = false;
            }
            if mass > 0.0 {
                y / mass
            } else {
                plan.source.atoms()[i].clone()
            }
        })
        .collect();
    TransportMap { base: plan.source.clone(), images, deterministic }
}

/// Inverse of a deterministic, injective map, based at `T#base`.
pub fn invert_map(map: &TransportMap) -> Result<TransportMap> {
    if !map.deterministic {
        return Err(Error::NondeterministicMap);
    }
    for i in 0..map.images.len() {
        for j in (i + 1)..map.images.len() {
            if (&map.images[i] - &map.images[j]).norm() <= 1e-12 {
                return Err(Error::NonInvertible { first: i, second: j });
            }
        }
    }
    Ok(TransportMap {
        base: map.pushforward(),
        images: map.base.atoms().to_vec(),
        deterministic: true,
    })
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TOutOfRange(t));
    }
    Ok(())
}

/// Displacement interpolation `((1-t) x + t y)#gamma`.
pub fn geodesic(plan: &TransportPlan, t: f64) -> Result<DiscreteMeasure> {
    check_t(t)?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (i, j, g) in plan.support() {
        atoms.push(&plan.source.atoms()[i] * (1.0 - t) + &plan.target.atoms()[j] * t);
        weights.push(g);
    }
    Ok(DiscreteMeasure::from_parts_unchecked(atoms, weights))
}

/// Interpolates `mu0 -> mu1` along the coupling glued through `base`.
pub fn generalized_geodesic(
    base: &DiscreteMeasure,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    t: f64,
) -> Result<DiscreteMeasure> {
    check_t(t)?;
    let p0 = solve_ot(base, mu0)?;
    let p1 = solve_ot(base, mu1)?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (k, bk) in base.weights().iter().enumerate() {
        if *bk <= 0.0 {
            continue;
        }
        for i in 0..mu0.len() {
            let g0 = p0.gamma[(k, i)];
            if g0 <= 0.0 {
                continue;
            }
            for j in 0..mu1.len() {
                let g1 = p1.gamma[(k, j)];
                if g1 <= 0.0 {
                    continue;
                }
                atoms.push(&mu0.atoms()[i] * (1.0 - t) + &mu1.atoms()[j] * t);
                weights.push(g0 * g1 / bk);
            }
        }
    }
    Ok(DiscreteMeasure::from_parts_unchecked(atoms, weights))
}

/// Geodesic retraction onto the closed ball of radius `eps` around `center`.
pub fn project_to_ball(mu: &DiscreteMeasure, center: &DiscreteMeasure, eps: f64) -> Result<DiscreteMeasure> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("ball radius must be positive, got {eps}")));
    }
    let plan = solve_ot(center, mu)?;
    let dist = plan.cost.max(0.0).sqrt();
    if dist <= eps {
        return Ok(mu.clone());
    }
    geodesic(&plan, eps / dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::GaussianMeasure;
    use proptest::prelude::*;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform_from_rows(points.iter().map(|p| vec![*p]).collect()).unwrap()
    }

    fn point(x: f64) -> DiscreteMeasure {
        line(&[x])
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let mu = line(&[0.0, 1.5, -2.0]);
        let plan = solve_ot(&mu, &mu).unwrap();
        assert_eq!(plan.cost, 0.0);
    }

    #[test]
    fn dirac_pair() {
        let plan = solve_ot(&point(0.0), &point(1.0)).unwrap();
        assert_eq!(plan.gamma[(0, 0)], 1.0);
        assert_eq!(plan.cost, 1.0);
        assert_eq!(w2_discrete(&point(0.0), &point(1.0)).unwrap(), 1.0);
    }

    #[test]
    fn monotone_matching_on_the_line() {
        let mu = line(&[0.0, 1.0]);
        let nu = line(&[2.0, 3.0]);
        let plan = solve_ot(&mu, &nu).unwrap();
        assert!((plan.cost - 4.0).abs() < 1e-14);
        assert!((w2_discrete(&mu, &nu).unwrap() - 2.0).abs() < 1e-14);
        let map = extract_map(&plan);
        assert!(map.deterministic);
        assert_eq!(map.images[0][0], 2.0);
        assert_eq!(map.images[1][0], 3.0);

        let mid = geodesic(&plan, 0.5).unwrap();
        let mut pts: Vec<f64> = mid.atoms().iter().map(|a| a[0]).collect();
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![1.0, 2.0]);
        assert!((w2_discrete(&mu, &mid).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let a = point(0.0);
        let b = DiscreteMeasure::uniform_from_rows(vec![vec![0.0, 1.0]]).unwrap();
        assert!(matches!(solve_ot(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gaussian_distance() {
        let a = Measure::from(GaussianMeasure::from_rows(vec![0.0], vec![vec![1.0]]).unwrap());
        let b = Measure::from(GaussianMeasure::from_rows(vec![2.0], vec![vec![1.0]]).unwrap());
        assert!((w2(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert!(w2(&a, &a).unwrap().abs() < 1e-7);
        assert_eq!(w2(&a, &Measure::from(point(0.0))), Err(Error::MixedRepresentation));
    }

    #[test]
    fn split_row_gives_barycentric_map() {
        let plan = solve_ot(&point(0.0), &line(&[-1.0, 1.0])).unwrap();
        let map = extract_map(&plan);
        assert!(!map.deterministic);
        assert!(map.images[0][0].abs() < 1e-15);
        assert_eq!(invert_map(&map), Err(Error::NondeterministicMap));
    }

    #[test]
    fn inversion() {
        let mu = line(&[0.0, 1.0]);
        let id = TransportMap::identity(&mu);
        assert_eq!(invert_map(&id).unwrap().images, mu.atoms().to_vec());

        let map = extract_map(&solve_ot(&mu, &line(&[2.0, 3.0])).unwrap());
        let inv = invert_map(&map).unwrap();
        assert_eq!(inv.base.atoms()[0][0], 2.0);
        assert_eq!(inv.images[0][0], 0.0);
        assert_eq!(inv.images[1][0], 1.0);

        let collapsed = TransportMap {
            base: mu.clone(),
            images: vec![DVector::from_element(1, 1.0); 2],
            deterministic: true,
        };
        assert!(matches!(invert_map(&collapsed), Err(Error::NonInvertible { .. })));
    }

    #[test]
    fn geodesic_endpoints_and_range() {
        let plan = solve_ot(&point(0.0), &point(1.0)).unwrap();
        assert_eq!(geodesic(&plan, 0.5).unwrap().atoms()[0][0], 0.5);
        assert_eq!(geodesic(&plan, 0.0).unwrap(), point(0.0));
        assert_eq!(geodesic(&plan, 1.5), Err(Error::TOutOfRange(1.5)));
    }

    #[test]
    fn generalized_geodesic_examples() {
        let g = generalized_geodesic(&point(0.0), &point(1.0), &point(-1.0), 0.5).unwrap();
        assert_eq!(g.atoms()[0][0], 0.0);

        let mu0 = line(&[0.0, 1.0]);
        let mu1 = line(&[3.0, 5.0]);
        let via_base = generalized_geodesic(&mu0, &mu0, &mu1, 0.3).unwrap();
        let direct = geodesic(&solve_ot(&mu0, &mu1).unwrap(), 0.3).unwrap();
        assert!(w2_discrete(&via_base, &direct).unwrap() < 1e-12);
        let end = generalized_geodesic(&line(&[7.0, 8.0]), &mu0, &mu1, 1.0).unwrap();
        assert!(w2_discrete(&end, &mu1).unwrap() < 1e-12);
    }

    #[test]
    fn ball_projection() {
        let p = project_to_ball(&point(4.0), &point(0.0), 1.0).unwrap();
        assert!((p.atoms()[0][0] - 1.0).abs() < 1e-15);
        let inside = project_to_ball(&point(0.5), &point(0.0), 1.0).unwrap();
        assert_eq!(inside, point(0.5));
        let boundary = project_to_ball(&point(1.0), &point(0.0), 1.0).unwrap();
        assert_eq!(boundary, point(1.0));
    }

    fn cloud(max_n: usize, d: usize) -> impl Strategy<Value = DiscreteMeasure> {
        (1..=max_n).prop_flat_map(move |n| {
            (
                prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), n),
                prop::collection::vec(0.05..1.0f64, n),
            )
                .prop_map(|(rows, w)| {
                    let s: f64 = w.iter().sum();
                    DiscreteMeasure::from_rows(rows, w.iter().map(|v| v / s).collect()).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn plans_carry_a_dual_certificate((mu, nu) in (cloud(12, 2), cloud(12, 2))) {
            let plan = solve_ot(&mu, &nu).unwrap();
            let c = squared_distance_matrix(&mu, &nu);
            for i in 0..mu.len() {
                let row: f64 = plan.gamma.row(i).sum();
                prop_assert!((row - mu.weights()[i]).abs() < 1e-9);
                for j in 0..nu.len() {
                    let slack = c[(i, j)] - plan.phi[i] - plan.psi[j];
                    prop_assert!(slack >= -1e-7);
                    if plan.gamma[(i, j)] > 0.0 {
                        prop_assert!(slack.abs() < 1e-7);
                    }
                }
            }
            for j in 0..nu.len() {
                let col: f64 = plan.gamma.column(j).sum();
                prop_assert!((col - nu.weights()[j]).abs() < 1e-9);
            }
            let recomputed = plan.squared_distance_cost();
            prop_assert!((plan.cost - recomputed).abs() <= 1e-9 * recomputed.max(1.0));
        }

        #[test]
        fn geodesics_have_constant_speed(
            (mu, nu) in (cloud(8, 2), cloud(8, 2)),
            a in 0.0..1.0f64,
            b in 0.0..1.0f64,
        ) {
            let (s, t) = if a <= b { (a, b) } else { (b, a) };
            let plan = solve_ot(&mu, &nu).unwrap();
            let w = plan.cost.sqrt();
            let ms = geodesic(&plan, s).unwrap();
            let mt = geodesic(&plan, t).unwrap();
            let d = w2_discrete(&ms, &mt).unwrap();
            prop_assert!((d - (t - s) * w).abs() < 1e-7, "{} vs {}", d, (t - s) * w);
        }

        #[test]
        fn spd_affine_maps_are_optimal(
            mu in cloud(10, 2),
            l in prop::collection::vec(-1.0..1.0f64, 4),
            b in prop::collection::vec(-2.0..2.0f64, 2),
        ) {
            let l = DMatrix::from_row_slice(2, 2, &l);
            let a = &l * l.transpose() + DMatrix::identity(2, 2) * 0.1;
            let b = DVector::from_vec(b);
            let pushed = mu.pushforward_affine(&a, &b).unwrap();
            let map = TransportMap { base: mu.clone(), images: pushed.atoms().to_vec(), deterministic: true };
            let w = w2_discrete(&mu, &pushed).unwrap();
            prop_assert!((map.displacement_norm() - w).abs() < 1e-8);
        }

        #[test]
        fn w2_is_a_metric((a, b, c) in (cloud(6, 2), cloud(6, 2), cloud(6, 2))) {
            let ab = w2_discrete(&a, &b).unwrap();
            let ba = w2_discrete(&b, &a).unwrap();
            let bc = w2_discrete(&b, &c).unwrap();
            let ac = w2_discrete(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn projection_lands_on_the_sphere(
            (mu, center) in (cloud(6, 2), cloud(6, 2)),
            eps in 0.05..1.0f64,
        ) {
            let p = project_to_ball(&mu, &center, eps).unwrap();
            let d = w2_discrete(&center, &p).unwrap();
            let before = w2_discrete(&center, &mu).unwrap();
            if before <= eps {
                prop_assert_eq!(p, mu);
            } else {
                prop_assert!((d - eps).abs() < 1e-9);
            }
        }
    }
}
