use pmns::field::make_taylor_green;
use pmns::lemma_oracle::region_sums;
use pmns::solver::{zero_start, GridConfig, Solver, SolverConfig, StopReason};
use pmns::{LatticeSpec, WaveVector};

fn small_cfg(n: u32) -> SolverConfig {
    let grid = GridConfig {
        t_min: 1e-3,
        t_max: 4.0,
        nodes: 32,
        ..GridConfig::default()
    };
    SolverConfig {
        grid,
        ..SolverConfig::new(LatticeSpec::new(n).unwrap(), 1.0)
    }
}

#[test]
fn unique_fixed_point_from_two_starts() {
    let cfg = small_cfg(4);
    let v0 = make_taylor_green(cfg.spec, 5e-2);
    let solver = Solver::new(&cfg).unwrap();
    let (a, ra) = solver.solve(&v0).unwrap();
    let (b, rb) = solver
        .solve_from(&v0, Some(zero_start(&cfg).unwrap()))
        .unwrap();
    assert_eq!(ra.stop, StopReason::Converged);
    assert_eq!(rb.stop, StopReason::Converged);
    assert!(rb.iterations() >= ra.iterations());
    let gap = solver.triple(&a.sub(&b).unwrap()).unwrap();
    assert!(gap <= 10.0 * cfg.tol, "gap {gap:e}");
    for f in a.fields() {
        assert!(f.divergence_defect() <= 1e-12 && f.conjugate_symmetry_defect() <= 1e-12);
    }
}

#[test]
fn bilinear_constant_is_stable_in_n() {
    let etas: Vec<f64> = [4, 6, 8]
        .iter()
        .map(|&n| {
            Solver::new(&small_cfg(n))
                .unwrap()
                .measure_bilinear_constant(&[])
                .unwrap()
        })
        .collect();
    let (lo, hi) = etas
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    assert!(hi.is_finite() && lo > 0.0, "{etas:?}");
    assert!(hi / lo <= 2.0, "{etas:?}");
}

#[test]
fn inner_region_scales_like_inverse_k() {
    // |k| q2 along three directions for |k|∞ = 4, 8, 12, 16. On Q2, |j| < √3 m/4 and
    // |k - j| ≥ |k| - √3 m/4, so |k| q2 ≤ |k| Σ_{l < m/4} (24l² + 2)/l² / (|k| - √3 m/4)².
    for dir in [[1, 0, 0], [1, 1, 0], [1, 1, 1]] {
        let mut scaled = Vec::new();
        for m in [4, 8, 12, 16] {
            let k = WaveVector::new(dir[0] * m, dir[1] * m, dir[2] * m);
            let q = region_sums(k, 4 * m as u32 + 1).unwrap().scaled(k)[1];
            let kn = k.euclid_norm();
            let shells: f64 = (1..)
                .take_while(|&l| 4 * l < m)
                .map(|l| (24 * l * l + 2) as f64 / (l * l) as f64)
                .sum();
            let bound = kn * shells / (kn - 3f64.sqrt() * m as f64 / 4.0).powi(2);
            assert!(q >= 0.0 && q <= bound, "{dir:?} m={m}: {q} > {bound}");
            scaled.push(q);
        }
        // increments shrink: the sequence levels off
        let inc: Vec<f64> = scaled.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(inc.windows(2).all(|w| w[1] <= w[0]), "{dir:?}: {scaled:?}");
    }
}
