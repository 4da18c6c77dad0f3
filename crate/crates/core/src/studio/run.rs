//! Study orchestration: mesh sequences, solves, error tables, fits and gates.

use std::time::Instant;

use super::config::{Domain, StudyConfig, StudyKind};
use super::report::{ErrorRecord, FitRecord, HypothesisRow, Series, StudyReport, Timings};
use crate::error::{Error, Result};
use crate::fem::{assemble, Conformity, Family, FeSpace};
use crate::field::{Monomial, ScalarField};
use crate::geometry::CellKind;
use crate::gevp::{solve_gevp_with, EigenSolution, SolveOptions, CERTIFY_TOL, DENSE_LIMIT};
use crate::mesh::{interval_mesh, rect_mesh, tri_mesh_from_rect, Mesh};
use crate::polyspace::{annihilation_check, MultiIndex, ProjectionNorm};
use crate::rates::{
    aligned_approximation, best_approximation, bound_ratio, broken_error, eoc, lambda_scaling, match_eigenpair, reliability,
    rhs_seminorm, PiecewisePoly, RateFit, Region, Weighting,
};
use crate::spectra::{
    beam_clamped, beam_root, eigen_identity_check, laplace_interval, laplace_square, pleijel_estimate, square_eigenvalues,
    weyl_estimate, ExactEigenpair,
};

/// Reference value of the first clamped-beam root.
const KAPPA_1: f64 = 4.7300407448627;

/// Thread policy for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `Some(0)` is the sequential reference mode, `None` the rayon default.
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn reference() -> Self {
        RunOptions { threads: Some(0) }
    }

    /// Reads EIGENRATE_THREADS.
    pub fn from_env() -> Result<Self> {
        match std::env::var("EIGENRATE_THREADS") {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .map(|n| RunOptions { threads: Some(n) })
                .map_err(|_| Error::Study(format!("EIGENRATE_THREADS must be a non-negative integer, got '{v}'"))),
            Err(_) => Ok(RunOptions { threads: None }),
        }
    }

    pub fn sequential(&self) -> bool {
        self.threads == Some(0)
    }
}

/// Runs one study under the thread policy.
pub fn run_study(cfg: &StudyConfig, opts: &RunOptions) -> Result<(StudyReport, Timings)> {
    let threads = match opts.threads {
        Some(0) => 1,
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Study(format!("thread pool: {e}")))?;
    let parallel = !opts.sequential();
    pool.install(|| {
        let mut ctx = Ctx {
            cfg,
            parallel,
            report: StudyReport::new(cfg),
            timings: Timings {
                study: cfg.name.clone(),
                stages: Vec::new(),
            },
        };
        match cfg.kind {
            StudyKind::Laplace1d | StudyKind::Laplace2d | StudyKind::Beam => ctx.eigen_study()?,
            StudyKind::Approx => ctx.approx_study()?,
            StudyKind::Reliability => ctx.reliability_study()?,
            StudyKind::Spectrum => ctx.spectrum_study()?,
        }
        ctx.report.settle();
        Ok((ctx.report, ctx.timings))
    })
    .map_err(|e: Error| e.at_stage(format!("study {}", cfg.name)))
}

struct Ctx<'a> {
    cfg: &'a StudyConfig,
    parallel: bool,
    report: StudyReport,
    timings: Timings,
}

fn timed<T>(timings: &mut Timings, stage: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.at_stage(stage.clone()));
    timings.record(stage, t.elapsed().as_secs_f64());
    out
}

fn spread(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

fn last(v: &[f64], k: usize) -> &[f64] {
    &v[v.len().saturating_sub(k)..]
}

impl Ctx<'_> {
    fn mesh(&self, n: usize) -> Result<Mesh> {
        let c = self.cfg;
        match c.kind {
            StudyKind::Laplace2d => {
                let rect = rect_mesh(n, n, [0.0; 2], [1.0; 2], [c.grading; 2])?;
                if c.cell == CellKind::Triangle {
                    tri_mesh_from_rect(&rect, c.split)
                } else {
                    Ok(rect)
                }
            }
            _ => interval_mesh(0.0, 1.0, n, c.grading),
        }
    }

    fn exact(&self, count: usize) -> Result<Vec<ExactEigenpair>> {
        Ok(match self.cfg.kind {
            StudyKind::Laplace2d => laplace_square(count),
            StudyKind::Beam => beam_clamped(count)?,
            _ => laplace_interval(count),
        })
    }

    fn solve(&mut self, stage: String, space: &FeSpace, k: usize) -> Result<EigenSolution> {
        let n = space.n_free();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge { size: n, limit: DENSE_LIMIT }.at_stage(stage));
        }
        let parallel = self.parallel;
        let solver = self.cfg.solver;
        let seed = self.cfg.seed;
        let pair = timed(&mut self.timings, format!("{stage} assemble"), || assemble(space, parallel))?;
        timed(&mut self.timings, format!("{stage} solve"), || {
            let mut o = SolveOptions::new(k.min(n)).method(solver);
            o.seed = seed;
            solve_gevp_with(&pair, &o)
        })
    }

    fn eigen_study(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let family = cfg.family;
        let dim = cfg.dim();
        let m = cfg.m();
        let r = family.r(dim);
        let max_mode = *cfg.modes.iter().max().unwrap_or(&1);
        let exact = self.exact(max_mode + 2)?;
        let window: usize = exact[..max_mode].iter().map(|e| e.multiplicity).sum();
        let space_local = family.space(dim);
        let quasi = cfg.kind != StudyKind::Beam;

        for (level, &n) in cfg.levels.iter().enumerate() {
            let stage = format!("level {level} (n = {n})");
            let t0 = Instant::now();
            let mesh = self.mesh(n).map_err(|e| e.at_stage(stage.clone()))?;
            self.timings.record(format!("{stage} mesh"), t0.elapsed().as_secs_f64());
            let reg = mesh.regularity();
            let space = FeSpace::new(mesh, family, m).map_err(|e| e.at_stage(stage.clone()))?;
            let sol = self.solve(stage.clone(), &space, window)?;
            let lambdas = sol.lambdas();
            let h = space.mesh.h();
            let h_dir = [space.mesh.h_dir(0), if dim == 2 { space.mesh.h_dir(1) } else { 0.0 }];
            let t = Instant::now();
            for &mode in &cfg.modes {
                let mt = match_eigenpair(&lambdas, &exact, mode - 1).map_err(|e| e.at_stage(stage.clone()))?;
                let u = exact[mode - 1].function();
                let uh = aligned_approximation(&space, &sol.pairs, &mt, u)?;
                let pw = PiecewisePoly::from_fe(&uh);
                let mut rec = ErrorRecord::new(level, [n, if dim == 2 { n } else { 1 }], h, h_dir, space.n_free());
                rec.mode = Some(mode);
                rec.lambda = Some(mt.lambda);
                rec.lambda_h = Some(mt.lambda_h[0]);
                rec.relative_error = Some((mt.lambda_h[0] - mt.lambda) / mt.lambda);
                rec.solver = Some(sol.method);
                rec.residual = Some(sol.max_residual);
                rec.orthogonality = Some(sol.orthogonality);
                rec.push("sigma", reg.sigma);
                rec.push("max_aspect", reg.max_aspect);
                for ns in &cfg.norms {
                    let lab = ns.label();
                    let p = ns.p.0;
                    let e_o = broken_error(&space.mesh, u, &pw, ns.j, p, Region::Omega, Weighting::None)?;
                    let e_g = broken_error(&space.mesh, u, &pw, ns.j, p, Region::G, Weighting::None)?;
                    rec.push(format!("e_{lab}_omega"), e_o);
                    rec.push(format!("e_{lab}_g"), e_g);
                    if p.is_finite() {
                        let w = broken_error(&space.mesh, u, &pw, ns.j, p, Region::G, Weighting::Local { r })?;
                        rec.push(format!("w_{lab}_g"), w);
                    }
                    rec.push(format!("ratio_{lab}_g"), bound_ratio(e_g, h, mt.lambda, r, ns.j, m));
                }
                if quasi {
                    let best = best_approximation(&space.mesh, &space_local, u, ProjectionNorm::H1)?;
                    rec.push("best_j1_p2_omega", broken_error(&space.mesh, u, &best, 1, 2.0, Region::Omega, Weighting::None)?);
                    if rec.get("e_j1_p2_omega").is_none() {
                        rec.push("e_j1_p2_omega", broken_error(&space.mesh, u, &pw, 1, 2.0, Region::Omega, Weighting::None)?);
                    }
                }
                self.report.records.push(rec);
            }
            self.timings.record(format!("{stage} errors"), t.elapsed().as_secs_f64());
        }
        self.eigen_gates(r, m)?;
        if let Some(d) = cfg.dispersion.clone() {
            self.dispersion_check(&d)?;
        }
        if let Some(s) = cfg.scaling.clone() {
            self.scaling_check(&s, r)?;
        }
        Ok(())
    }

    fn column(&self, mode: usize, name: &str) -> (Vec<f64>, Vec<f64>) {
        let mut hs = Vec::new();
        let mut vs = Vec::new();
        for rec in self.report.records.iter().filter(|r| r.mode == Some(mode)) {
            let v = if name == "eig" {
                rec.relative_error.map(f64::abs)
            } else {
                rec.get(name)
            };
            if let Some(v) = v {
                hs.push(rec.h);
                vs.push(v);
            }
        }
        (hs, vs)
    }

    fn fit(&mut self, name: String, hs: &[f64], es: &[f64], k: usize, expected: Option<f64>) -> Option<RateFit> {
        let (h, e) = (last(hs, k), last(es, k));
        match eoc(e, h) {
            Ok(mut f) => {
                f.window = [hs.len() - h.len(), hs.len() - 1];
                self.report.fits.push(FitRecord {
                    name,
                    against: "h".into(),
                    fit: f.clone(),
                    expected,
                });
                Some(f)
            }
            Err(_) => None,
        }
    }

    fn eigen_gates(&mut self, r: usize, m: usize) -> Result<()> {
        let cfg = self.cfg;
        let k = cfg.fit_levels;
        // certification
        let worst_res = self.report.records.iter().filter_map(|r| r.residual).fold(0.0, f64::max);
        let worst_orth = self.report.records.iter().filter_map(|r| r.orthogonality).fold(0.0, f64::max);
        self.report.gate(
            "certify",
            worst_res <= CERTIFY_TOL && worst_orth <= CERTIFY_TOL,
            worst_res.max(worst_orth),
            format!("residual and B-orthonormality <= {CERTIFY_TOL:e}"),
            format!("max residual {worst_res:.3e}, max orthogonality defect {worst_orth:.3e}"),
        );

        let mut upper_ok = true;
        let mut upper_dev: f64 = 0.0;
        let mut upper_detail = Vec::new();
        let mut lower_ok = true;
        let mut lower_worst: f64 = 0.0;
        let mut lower_detail = Vec::new();
        let mut eig_ok = true;
        let mut eig_dev: f64 = 0.0;
        let mut eig_detail = Vec::new();
        let one_sided = cfg.family.conformity() != Conformity::Conforming;
        for &mode in &cfg.modes {
            for ns in cfg.norms.clone() {
                if ns.j > r {
                    continue;
                }
                let lab = ns.label();
                let expect = (r - ns.j) as f64;
                let (hs, eo) = self.column(mode, &format!("e_{lab}_omega"));
                match self.fit(format!("mode{mode}_{lab}_omega"), &hs, &eo, k, Some(expect)) {
                    Some(f) => {
                        let d = (f.slope - expect).abs();
                        upper_dev = upper_dev.max(d);
                        upper_ok &= d <= cfg.eoc_tol;
                        upper_detail.push(format!("mode {mode} {lab}: {:.3} (want {expect})", f.slope));
                    }
                    None => {
                        upper_ok = false;
                        upper_detail.push(format!("mode {mode} {lab}: no fit"));
                    }
                }
                let (hs, eg) = self.column(mode, &format!("e_{lab}_g"));
                match self.fit(format!("mode{mode}_{lab}_g"), &hs, &eg, k, Some(expect)) {
                    Some(f) => {
                        let over = f.slope - expect;
                        lower_worst = lower_worst.max(over);
                        lower_ok &= over <= cfg.lower_slack;
                        lower_detail.push(format!("mode {mode} {lab} G slope {:.3}", f.slope));
                    }
                    None => {
                        lower_ok = false;
                        lower_detail.push(format!("mode {mode} {lab}: no G fit"));
                    }
                }
                let (_, ratios) = self.column(mode, &format!("ratio_{lab}_g"));
                let (lo, hi) = spread(&ratios);
                let ok = ratios.len() >= 4 && lo > 0.0 && hi / lo <= cfg.ratio_spread;
                lower_ok &= ok;
                lower_detail.push(format!("ratios {lo:.3e}..{hi:.3e} over {} levels", ratios.len()));
            }
            let expect = 2.0 * (r - m) as f64;
            let (hs, ee) = self.column(mode, "eig");
            match self.fit(format!("mode{mode}_eigenvalue"), &hs, &ee, k, Some(expect)) {
                Some(f) => {
                    // Nonconforming families can cancel the leading term on uniform
                    // meshes; there only the bound itself is checked.
                    let d = if one_sided { (expect - f.slope).max(0.0) } else { (f.slope - expect).abs() };
                    eig_dev = eig_dev.max(d);
                    eig_ok &= d <= cfg.eig_tol;
                    eig_detail.push(format!("mode {mode}: {:.3} (want {expect})", f.slope));
                }
                None => {
                    eig_ok = false;
                    eig_detail.push(format!("mode {mode}: no fit"));
                }
            }
        }
        self.report.gate("upper", upper_ok, upper_dev, format!("|EOC - (r - j)| <= {}", cfg.eoc_tol), upper_detail.join("; "));
        self.report.gate(
            "lower",
            lower_ok,
            lower_worst,
            format!("EOC_G <= r - j + {}, ratio min > 0, max/min <= {}", cfg.lower_slack, cfg.ratio_spread),
            lower_detail.join("; "),
        );
        let eig_expect = if one_sided {
            format!("EOC >= 2(r - m) - {}", cfg.eig_tol)
        } else {
            format!("|EOC - 2(r - m)| <= {}", cfg.eig_tol)
        };
        self.report.gate("eigen-rate", eig_ok, eig_dev, eig_expect, eig_detail.join("; "));

        if cfg.family.conformity() == Conformity::Conforming {
            let mut ok = true;
            let mut worst: f64 = 0.0;
            for &mode in &cfg.modes {
                let recs: Vec<&ErrorRecord> = self.report.records.iter().filter(|r| r.mode == Some(mode)).collect();
                for (i, rec) in recs.iter().enumerate() {
                    let (l, lh) = (rec.lambda.unwrap_or(0.0), rec.lambda_h.unwrap_or(0.0));
                    worst = worst.min((lh - l) / l);
                    ok &= lh >= l * (1.0 - 1e-12);
                    if i > 0 {
                        ok &= lh <= recs[i - 1].lambda_h.unwrap_or(f64::INFINITY) * (1.0 + 1e-12);
                    }
                }
            }
            self.report.gate(
                "monotone",
                ok,
                worst,
                "lambda <= lambda_h, non-increasing under refinement",
                "min principle for conforming spaces",
            );
        }
        if cfg.kind != StudyKind::Beam {
            let mut ok = true;
            let mut worst: f64 = 0.0;
            for rec in &self.report.records {
                if let (Some(b), Some(g)) = (rec.get("best_j1_p2_omega"), rec.get("e_j1_p2_omega")) {
                    worst = worst.max(b / g);
                    ok &= b <= g * (1.0 + 1e-12);
                }
            }
            self.report.gate("quasi-optimal", ok, worst, "best H1 approximation <= Galerkin error", "elementwise H1 projection");
        }
        // Empirical lambda power at the finest level (reported, not gated).
        if cfg.modes.len() >= 3 {
            if let Some(ns) = cfg.norms.iter().find(|n| n.j == 1 && n.p.0 == 2.0) {
                let lab = format!("e_{}_omega", ns.label());
                let finest = cfg.levels.len() - 1;
                let (ls, es): (Vec<f64>, Vec<f64>) = self
                    .report
                    .records
                    .iter()
                    .filter(|r| r.level == finest)
                    .filter_map(|r| Some((r.lambda?, r.get(&lab)?)))
                    .unzip();
                if let Ok(f) = lambda_scaling(&es, &ls, 0.0, f64::INFINITY) {
                    self.report.fits.push(FitRecord {
                        name: "lambda_power_j1".into(),
                        against: "lambda".into(),
                        fit: f,
                        expected: None,
                    });
                }
            }
        }
        Ok(())
    }

    fn dispersion_check(&mut self, d: &super::config::DispersionCheck) -> Result<()> {
        let cfg = self.cfg;
        if cfg.kind != StudyKind::Laplace1d || cfg.family != Family::P1 || cfg.grading != 1.0 {
            return Err(Error::Study("the dispersion check needs a uniform P1 interval study".into()));
        }
        let stage = format!("dispersion (n = {})", d.level);
        let mesh = self.mesh(d.level)?;
        let space = FeSpace::new(mesh, Family::P1, 1)?;
        let sol = self.solve(stage, &space, d.count)?;
        let h = 1.0 / d.level as f64;
        let mut series = Series::new("dispersion", &["k", "lambda_h", "formula", "relative_deviation"]);
        let mut worst: f64 = 0.0;
        for (i, p) in sol.pairs.iter().enumerate() {
            let c = ((i + 1) as f64 * std::f64::consts::PI * h).cos();
            let formula = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
            let dev = (p.lambda - formula).abs() / formula;
            worst = worst.max(dev);
            series.push(&[(i + 1) as f64, p.lambda, formula, dev]);
        }
        self.report.series.push(series);
        self.report.gate(
            "dispersion",
            worst <= d.tol && sol.pairs.len() == d.count && sol.max_residual <= CERTIFY_TOL,
            worst,
            format!("relative deviation <= {:e} for k <= {}", d.tol, d.count),
            format!("h = 1/{}, solver {:?}", d.level, sol.method),
        );
        Ok(())
    }

    fn scaling_check(&mut self, s: &super::config::ScalingCheck, r: usize) -> Result<()> {
        let stage = format!("lambda scaling (n = {})", s.level);
        let mesh = self.mesh(s.level)?;
        let space = FeSpace::new(mesh, self.cfg.family, 1)?;
        let h = space.mesh.h();
        let sol = self.solve(stage, &space, s.modes)?;
        let exact = laplace_interval(s.modes);
        let mut series = Series::new("lambda_scaling", &["k", "lambda", "lambda_h", "relative_error", "closed_form"]);
        let mut errs = Vec::new();
        let mut lams = Vec::new();
        let mut cf_worst: f64 = 0.0;
        for (p, e) in sol.pairs.iter().zip(&exact) {
            let rel = (p.lambda - e.lambda) / e.lambda;
            let cf = e.lambda * h * h / 12.0;
            cf_worst = cf_worst.max((rel - cf).abs() / cf);
            series.push(&[e.modes[0][0] as f64, e.lambda, p.lambda, rel, cf]);
            errs.push(rel);
            lams.push(e.lambda);
        }
        self.report.series.push(series);
        let expect = (r - 1) as f64;
        match lambda_scaling(&errs, &lams, h, s.cap) {
            Ok(f) => {
                let d = (f.slope - expect).abs();
                self.report.gate(
                    "lambda-scaling",
                    d <= s.tol,
                    f.slope,
                    format!("slope {expect} +- {}", s.tol),
                    format!("k = 1..{} at h = 1/{}, cap lambda h^2 <= {}", s.modes, s.level, s.cap),
                );
                self.report.fits.push(FitRecord {
                    name: "relative_eigenvalue_error_vs_lambda".into(),
                    against: "lambda".into(),
                    fit: f,
                    expected: Some(expect),
                });
            }
            Err(e) => self.report.gate("lambda-scaling", false, f64::NAN, format!("slope {expect}"), e.to_string()),
        }
        if self.cfg.family == Family::P1 && self.cfg.kind == StudyKind::Laplace1d {
            self.report.gate(
                "closed-form",
                cf_worst <= s.closed_form_tol,
                cf_worst,
                format!("|e - lambda h^2/12| / (lambda h^2/12) <= {}", s.closed_form_tol),
                "P1 interval closed form",
            );
        }
        Ok(())
    }

    fn approx_study(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let family = cfg.family;
        let r = family.r(2);
        let power = cfg.power.unwrap_or(r as u32) as usize;
        let u = Monomial::new(MultiIndex::new2(power, 0));
        let space = family.space(2);
        let p = cfg.p.0;
        let mut level = 0;
        for (dir, name) in [(0usize, "x"), (1usize, "y")] {
            for &n in &cfg.levels {
                let cells = if dir == 0 { [n, cfg.base] } else { [cfg.base, n] };
                let stage = format!("refine {name} n = {n}");
                let mesh = timed(&mut self.timings, format!("{stage} mesh"), || {
                    rect_mesh(cells[0], cells[1], [0.0; 2], [1.0; 2], [1.0; 2])
                })?;
                let (e, rhs) = timed(&mut self.timings, format!("{stage} projection"), || {
                    let best = best_approximation(&mesh, &space, &u, ProjectionNorm::L2)?;
                    let e = broken_error(&mesh, &u, &best, 0, p, Region::Omega, Weighting::None)?;
                    let rhs = rhs_seminorm(&u, &mesh, family, MultiIndex::zero(2), p)?;
                    Ok((e, rhs))
                })?;
                let mut rec = ErrorRecord::new(level, cells, mesh.h(), [mesh.h_dir(0), mesh.h_dir(1)], 0);
                rec.push("direction", dir as f64);
                rec.push("e_proj", e);
                rec.push("rhs", rhs);
                rec.push("ratio_rhs", e / rhs);
                self.report.records.push(rec);
                level += 1;
            }
        }
        let pick = |dir: f64, name: &str, recs: &[ErrorRecord]| -> (Vec<f64>, Vec<f64>) {
            recs.iter()
                .filter(|r| r.get("direction") == Some(dir))
                .map(|r| (r.h_dir[dir as usize], r.get(name).unwrap_or(f64::NAN)))
                .unzip()
        };
        let (_, ey) = pick(1.0, "e_proj", &self.report.records);
        let (lo, hi) = spread(&ey);
        let flat = (hi - lo) / hi;
        self.report.gate(
            "flat",
            flat < cfg.flat_tol,
            flat,
            format!("relative change < {} when only h2 is refined", cfg.flat_tol),
            format!("u = x^{power}, {} family", family.name()),
        );
        let (hx, ex) = pick(0.0, "e_proj", &self.report.records);
        let (_, rx) = pick(0.0, "rhs", &self.report.records);
        let k = cfg.fit_levels;
        let expect = r as f64;
        let fe = self.fit("e_proj_refine_x".into(), &hx, &ex, k, Some(expect));
        let fr = self.fit("rhs_refine_x".into(), &hx, &rx, k, Some(expect));
        match &fe {
            Some(f) => self.report.gate(
                "anisotropic-rate",
                (f.slope - expect).abs() <= cfg.eoc_tol,
                f.slope,
                format!("{expect} +- {}", cfg.eoc_tol),
                "EOC in h1 with h2 fixed",
            ),
            None => self.report.gate("anisotropic-rate", false, f64::NAN, format!("{expect}"), "no fit"),
        }
        let worst = self.report.records.iter().filter_map(|r| r.get("ratio_rhs")).fold(0.0, f64::max);
        self.report.gate(
            "rhs-bound",
            worst <= cfg.rhs_factor,
            worst,
            format!("projection error <= {} x bound", cfg.rhs_factor),
            "every level, both directions",
        );
        match (fe, fr) {
            (Some(a), Some(b)) => self.report.gate(
                "rhs-rate",
                (a.slope - b.slope).abs() <= cfg.eoc_tol,
                b.slope,
                format!("bound EOC within {} of error EOC {:.3}", cfg.eoc_tol, a.slope),
                "refine x",
            ),
            _ => self.report.gate("rhs-rate", false, f64::NAN, "matching rates", "no fit"),
        }
        Ok(())
    }

    fn reliability_study(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut spectra = Vec::new();
        let mut worst_cert: f64 = 0.0;
        for (level, &n) in cfg.levels.iter().enumerate() {
            let stage = format!("level {level} (n = {n})");
            let mesh = self.mesh(n)?;
            let space = FeSpace::new(mesh, cfg.family, 1)?;
            let nf = space.n_free();
            let k = ((cfg.window_fraction * nf as f64).ceil() as usize).clamp(1, nf);
            let sol = self.solve(stage, &space, k)?;
            worst_cert = worst_cert.max(sol.max_residual).max(sol.orthogonality);
            let mut rec = ErrorRecord::new(level, [n, 1], space.mesh.h(), [space.mesh.h_dir(0), 0.0], nf);
            rec.solver = Some(sol.method);
            rec.residual = Some(sol.max_residual);
            rec.orthogonality = Some(sol.orthogonality);
            spectra.push((nf, sol.lambdas()));
            self.report.records.push(rec);
        }
        let count = spectra.iter().map(|s| s.1.len()).max().unwrap_or(0);
        let exact: Vec<f64> = laplace_interval(count).iter().map(|e| e.lambda).collect();
        let rep = reliability(&spectra, &exact, cfg.tolerance, cfg.tolerance_mode)?;
        let mut ratio_ok = true;
        let mut worst_ratio_dev: f64 = 0.0;
        let mut window_ok = true;
        for (rec, lv) in self.report.records.iter_mut().zip(&rep.levels) {
            rec.push("j_star", lv.j_star as f64);
            rec.push("window", lv.window as f64);
            rec.push("ratio", lv.ratio);
            let d = (lv.ratio - cfg.ratio_target).abs();
            worst_ratio_dev = worst_ratio_dev.max(d);
            ratio_ok &= d <= cfg.ratio_tol;
            window_ok &= lv.j_star < lv.window;
        }
        self.report.gate(
            "certify",
            worst_cert <= CERTIFY_TOL,
            worst_cert,
            format!("<= {CERTIFY_TOL:e}"),
            "every reliability solve",
        );
        self.report.gate(
            "ratio",
            ratio_ok && window_ok,
            worst_ratio_dev,
            format!("|j*/N - {}| <= {}", cfg.ratio_target, cfg.ratio_tol),
            if window_ok { "all levels".to_string() } else { "j* reached the computed window; increase window_fraction".to_string() },
        );
        let mono = rep.levels.windows(2).all(|w| w[1].j_star >= w[0].j_star);
        self.report.gate("monotone-count", mono, f64::NAN, "j* non-decreasing in N", "");
        match rep.exponent {
            Some(e) => self.report.gate(
                "exponent",
                (e - cfg.exponent_target).abs() <= cfg.exponent_tol,
                e,
                format!("{} +- {}", cfg.exponent_target, cfg.exponent_tol),
                format!("theta = {:.4}", 1.0 - e),
            ),
            None => self.report.gate("exponent", false, f64::NAN, format!("{}", cfg.exponent_target), "some j* is zero"),
        }
        let ns: Vec<f64> = rep.levels.iter().map(|l| l.n as f64).collect();
        let js: Vec<f64> = rep.levels.iter().map(|l| l.j_star as f64).collect();
        if let Ok(f) = lambda_scaling(&js, &ns, 0.0, f64::INFINITY) {
            self.report.fits.push(FitRecord {
                name: "j_star_vs_n".into(),
                against: "n".into(),
                fit: f,
                expected: Some(cfg.exponent_target),
            });
        }
        self.report.reliability = Some(rep);
        Ok(())
    }

    fn spectrum_study(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let g = ([0.25, 0.25], [0.75, 0.75]);
        let mut ident_worst: f64 = 0.0;
        match cfg.domain {
            Domain::Interval => {
                let ex = laplace_interval(cfg.count);
                let mut s = Series::new("spectrum", &["j", "lambda", "weyl", "ratio"]);
                let mut worst: f64 = 0.0;
                for (i, e) in ex.iter().enumerate() {
                    let w = weyl_estimate(i + 1, 1, 1.0);
                    worst = worst.max((e.lambda - w).abs() / e.lambda);
                    s.push(&[(i + 1) as f64, e.lambda, w, e.lambda / w]);
                }
                self.report.series.push(s);
                self.report.gate("weyl-exact", worst <= 1e-12, worst, "relative deviation <= 1e-12", format!("j = 1..{}", cfg.count));
                for k in 1..=3.min(cfg.count) {
                    ident_worst = ident_worst.max(eigen_identity_check(&ex[k - 1], 3, 1, g, 2.0)?);
                }
            }
            Domain::Square => {
                let count = cfg.count.max(cfg.weyl_range[1]);
                let vals = square_eigenvalues(count);
                let mut s = Series::new("spectrum", &["j", "lambda", "weyl", "ratio"]);
                let mut ok = true;
                let mut worst: f64 = 0.0;
                for (i, l) in vals.iter().enumerate() {
                    let j = i + 1;
                    let w = weyl_estimate(j, 2, 1.0);
                    s.push(&[j as f64, *l, w, l / w]);
                    if j >= cfg.weyl_range[0] && j <= cfg.weyl_range[1] {
                        let d = (l / w - 1.0).abs();
                        worst = worst.max(d);
                        ok &= d <= cfg.weyl_band;
                    }
                }
                self.report.series.push(s);
                self.report.gate(
                    "weyl-band",
                    ok,
                    worst,
                    format!("|lambda_j / weyl_j - 1| <= {}", cfg.weyl_band),
                    format!("j in [{}, {}]", cfg.weyl_range[0], cfg.weyl_range[1]),
                );
                let distinct = laplace_square(cfg.count);
                let mut expanded = Vec::new();
                let mut t = Series::new("distinct", &["index", "lambda_over_pi2", "multiplicity"]);
                for (i, e) in distinct.iter().enumerate() {
                    t.push(&[(i + 1) as f64, e.lambda / std::f64::consts::PI.powi(2), e.multiplicity as f64]);
                    expanded.extend(std::iter::repeat_n(e.lambda, e.multiplicity));
                }
                self.report.series.push(t);
                let n = expanded.len().min(vals.len());
                let consistent = expanded[..n] == vals[..n];
                self.report.gate("enumeration", consistent, n as f64, "distinct list expands to the sorted spectrum", "");
                ident_worst = ident_worst.max(eigen_identity_check(&distinct[0], 2, 1, g, 2.0)?);
                ident_worst = ident_worst.max(eigen_identity_check(&distinct[0], 3, 1, g, 2.0)?);
            }
            Domain::Beam => {
                let count = cfg.count.min(cfg.pleijel_j.max(10));
                let mut s = Series::new("spectrum", &["j", "kappa", "lambda", "pleijel", "ratio"]);
                let mut root_ok = true;
                let mut root_worst: f64 = 0.0;
                for j in 1..=count {
                    let k = beam_root(j)?;
                    let res = (k.cos() * k.cosh() - 1.0).abs() / k.cosh();
                    root_worst = root_worst.max(res);
                    root_ok &= res <= 1e-9;
                    let l = k.powi(4);
                    let p = pleijel_estimate(j, 1, 1.0);
                    s.push(&[j as f64, k, l, p, l / p]);
                }
                self.report.series.push(s);
                let k1 = beam_root(1)?;
                self.report.gate(
                    "kappa",
                    (k1 - KAPPA_1).abs() <= cfg.kappa_tol,
                    k1,
                    format!("{KAPPA_1} +- {:e}", cfg.kappa_tol),
                    "bisection on cos k - sech k",
                );
                self.report.gate("root-residual", root_ok, root_worst, "|cos k cosh k - 1| <= 1e-9 cosh k", format!("j = 1..{count}"));
                let j = cfg.pleijel_j;
                let ratio = beam_root(j)?.powi(4) / pleijel_estimate(j, 1, 1.0);
                let want = ((j as f64 + 0.5) / j as f64).powi(4);
                self.report.gate(
                    "pleijel",
                    (ratio - want).abs() <= cfg.pleijel_tol,
                    ratio,
                    format!("(({j} + 1/2) / {j})^4 = {want:.6} +- {:e}", cfg.pleijel_tol),
                    "exact / estimate",
                );
                let modes = beam_clamped(2)?;
                for e in &modes {
                    ident_worst = ident_worst.max(eigen_identity_check(e, 4, 2, g, 2.0)?);
                    ident_worst = ident_worst.max(eigen_identity_check(e, 2, 2, g, 2.0)?);
                }
            }
        }
        self.report.gate(
            "identity",
            ident_worst <= cfg.identity_tol,
            ident_worst,
            format!("relative deviation <= {:e}", cfg.identity_tol),
            "norm identity between Delta-powers and lambda on G",
        );
        if cfg.hypotheses {
            self.hypotheses()?;
        }
        Ok(())
    }

    fn hypotheses(&mut self) -> Result<()> {
        let cases: [(Family, usize, usize, usize, bool); 8] = [
            (Family::P1, 2, 1, 2, true),
            (Family::P2, 2, 1, 3, true),
            (Family::P3, 2, 1, 4, true),
            (Family::Q1, 2, 1, 2, true),
            (Family::Cr, 2, 1, 2, true),
            (Family::Q1Rot, 2, 1, 2, true),
            (Family::Hermite, 1, 2, 4, true),
            (Family::Q2, 2, 1, 3, false),
        ];
        let mut ok = true;
        for (fam, dim, m, r, expected) in cases {
            let annihilated = annihilation_check(&fam.space(dim), m, r)?;
            ok &= annihilated == expected;
            self.report.hypotheses.push(HypothesisRow {
                family: fam.name().into(),
                r,
                m,
                annihilated,
                expected,
            });
        }
        self.report.gate("hypotheses", ok, f64::NAN, "annihilation matches the expected table", "symbolic check on the reference element");
        Ok(())
    }
}

/// Scalar field wrapper used by the approximation study.
pub fn target_monomial(power: usize) -> impl ScalarField {
    Monomial::new(MultiIndex::new2(power, 0))
}
