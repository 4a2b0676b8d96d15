//! One runner per subcommand. Each returns the tables and checks of its run.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;

use markovline::chain::{self, BandedKernel, StateVector};
use markovline::config::{self, Number};
use markovline::maps::{MapKind, MarkovMap};
use markovline::mixing::{self, GlmTarget, Placement, Verdict};
use markovline::observables::{self, DEFAULT_OFFSETS};
use markovline::orbits;

use crate::experiment::*;
use crate::report::{num, Report, Table};

pub struct Ctx<'a> {
    pub config: &'a ExperimentConfig,
    pub dir: &'a Path,
    pub seed: Option<u64>,
}

impl Ctx<'_> {
    fn map(&self) -> Result<MarkovMap> {
        let v = self.config.map.as_ref().ok_or_else(|| anyhow!("config has no `map`"))?;
        Ok(config::map_from_value(v, self.dir)?)
    }

    /// The kernel given directly, or that of a random-walk map.
    fn kernel(&self) -> Result<BandedKernel> {
        if let Some(v) = &self.config.kernel {
            return Ok(config::kernel_from_value(v, self.dir)?);
        }
        match self.map()?.kind() {
            MapKind::RandomWalk { kernel } => Ok(kernel.clone()),
            other => bail!("`{}` map has no kernel; give `kernel` in the config", other.name()),
        }
    }

    fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| anyhow!("no seed: set `seed` in the config or pass --seed"))
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| anyhow!("config has no [{name}] section"))
}

fn c_str(z: Complex64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

fn exact_vector(start: i64, weights: &[String]) -> Result<StateVector> {
    let w = weights
        .iter()
        .map(|s| Number::Text(s.clone()).rational())
        .collect::<markovline::Result<Vec<_>>>()?;
    Ok(StateVector::from_rationals(start, &w)?)
}

pub fn build_check(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.build_check, "build-check")?;
    let map = ctx.map()?;
    let mut r = Report::default();
    let p = map.params();
    r.value("variant", map.kind().name());
    r.value("lambda", p.lambda);
    r.value("eta", p.eta);
    r.value("j_hat", p.j_hat);
    r.value("jump", p.jump);
    r.value("c1", p.c1);
    r.value("c2", p.c2);
    if let Ok(logd) = map.distortion_log_bound() {
        r.value("distortion_bound", logd.exp());
    }
    let window = s.window.map(|w| (w[0], w[1])).unwrap_or_else(|| map.check_window());
    let m = map.check_measure_preservation(s.grid, window);
    let mut t = Table::new("measure", &["cell", "residual"]);
    for (k, v) in &m.per_cell {
        t.push(vec![k.to_string(), num(*v)]);
    }
    r.tables.push(t);
    r.value("max_residual", m.max_residual);
    r.check(
        "measure_preservation",
        m.max_residual <= s.tolerance,
        format!("max residual {:e} over cells {}..={}, tolerance {:e}", m.max_residual, window.0, window.1, s.tolerance),
    );
    if let Some(tol) = s.identity_tolerance {
        let res = map
            .modification_residual(s.grid)
            .ok_or_else(|| anyhow!("identity_tolerance needs a finite-modification map"))?;
        r.value("modification_residual", res);
        r.check(
            "modification_identity",
            res <= tol,
            format!("preimage mass differs from the base map by {res:e}, tolerance {tol:e}"),
        );
    }
    if let MapKind::RandomWalk { kernel } = map.kind() {
        let cs = chain::is_doubly_stochastic(kernel);
        r.value("column_residual", cs.max_residual);
        r.check("doubly_stochastic", cs.doubly_stochastic, format!("column residual {:e}", cs.max_residual));
    }
    Ok(r)
}

pub fn chain_analyze(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.chain_analyze, "chain-analyze")?;
    let kernel = ctx.kernel()?;
    let mut r = Report::default();
    let cs = chain::is_doubly_stochastic(&kernel);
    let irreducible = chain::is_irreducible(&kernel);
    let aperiodic = chain::is_aperiodic(&kernel);
    let periods = chain::class_periods(&kernel);
    let (mean, var) = kernel.stencil_moments();
    r.value("band", kernel.band() as i64);
    r.value("k_prime", kernel.k_prime());
    r.value("exact", cs.exact);
    r.value("doubly_stochastic", cs.doubly_stochastic);
    r.value("column_residual", cs.max_residual);
    r.value("irreducible", irreducible);
    r.value("aperiodic", aperiodic);
    r.value("class_periods", periods.iter().map(|&p| toml::Value::Integer(p as i64)).collect::<Vec<_>>());
    r.value("stencil_mean", mean);
    r.value("stencil_variance", var);
    let mut t = Table::new("columns", &["column", "sum"]);
    for (k, v) in &cs.columns {
        t.push(vec![k.to_string(), num(*v)]);
    }
    r.tables.push(t);
    let mut expect = |name: &str, want: Option<bool>, got: bool| {
        if let Some(w) = want {
            r.check(name, w == got, format!("expected {w}, got {got}"));
        }
    };
    expect("irreducible", s.expect_irreducible, irreducible);
    expect("aperiodic", s.expect_aperiodic, aperiodic);
    expect("doubly_stochastic", s.expect_doubly_stochastic, cs.doubly_stochastic);
    Ok(r)
}

pub fn evolve(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.evolve, "evolve")?;
    let kernel = ctx.kernel()?;
    let mut r = Report::default();
    let mut pi = match &s.weights {
        Some(w) => exact_vector(s.start, w)?,
        None => StateVector::delta(s.start),
    };
    let mut t = Table::new("evolve", &["n", "mass", "pi_0", "support_lo", "support_hi", "symmetric_decreasing"]);
    let mut all_sd = true;
    let mut mass_ok = true;
    for n in 0..=s.steps {
        if n > 0 {
            pi = pi.step(&kernel);
        }
        if n == 1 {
            if let Some(e) = &s.expect_first {
                let want = exact_vector(e.start, &e.weights)?;
                r.check("first_step", pi == want, format!("first step {:?}", pi.values()));
            }
        }
        let sd = pi.is_symmetric_decreasing();
        if n > 0 {
            all_sd &= sd;
        }
        mass_ok &= if pi.is_exact() { pi.mass_is_exactly_one() } else { (pi.mass() - 1.0).abs() < 1e-12 };
        if n % s.every.max(1) == 0 || n == s.steps {
            let (lo, hi) = pi.window();
            t.push(vec![n.to_string(), num(pi.mass()), num(pi.get(0)), lo.to_string(), hi.to_string(), sd.to_string()]);
        }
    }
    r.tables.push(t);
    let mut fin = Table::new("final", &["cell", "value", "exact"]);
    let (lo, hi) = pi.window();
    for j in lo..=hi {
        let exact = pi.get_exact(j).map(|q| q.to_string()).unwrap_or_default();
        fin.push(vec![j.to_string(), num(pi.get(j)), exact]);
    }
    r.tables.push(fin);
    r.value("steps", s.steps as i64);
    r.value("exact", pi.is_exact());
    r.value("pi_0", pi.get(0));
    r.check("mass_conserved", mass_ok, format!("final mass {}", pi.mass()));
    if s.expect_symmetric_decreasing {
        r.check("symmetric_decreasing", all_sd, format!("all {} steps symmetric decreasing: {all_sd}", s.steps));
    }
    Ok(r)
}

pub fn correlate(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.correlate, "correlate")?;
    let map = ctx.map()?;
    let f = config::observable_from_value(&s.observable, ctx.dir)?;
    let g = config::density_from_value(&s.density, ctx.dir, &map)?;
    let family = config::parse_family(&s.family)?;
    let mut r = Report::default();
    let target = match s.target.as_deref() {
        Some("ave") => Some(GlmTarget::AveTimesMass(family)),
        Some("zero") => Some(GlmTarget::Zero),
        None => None,
        Some(other) => bail!("unknown correlate target `{other}` (use `ave` or `zero`)"),
    };
    let mut t = Table::new("correlate", &["n", "c_re", "c_im", "residual"]);
    let values: Vec<Complex64> = match target {
        Some(tg) => {
            let rep = mixing::glm_report(&map, &f, &g, s.n_max, tg, s.threshold)?;
            r.value("functional", rep.functional.id());
            r.value("target", c_str(rep.target));
            r.value("infimum", rep.infimum);
            r.value("first_below", rep.first_below.map_or(-1, |n| n as i64));
            r.value("decays", rep.verdict == Verdict::Decays);
            for p in &rep.points {
                t.push(vec![p.n.to_string(), num(p.value.re), num(p.value.im), num(p.residual)]);
            }
            for c in &s.checkpoints {
                let p = rep.points.get(c.n).ok_or_else(|| anyhow!("checkpoint n = {} beyond n_max", c.n))?;
                r.check(
                    &format!("residual_at_{}", c.n),
                    p.residual <= c.max_residual,
                    format!("residual {:e} at n = {}, bound {:e}", p.residual, c.n, c.max_residual),
                );
            }
            rep.points.iter().map(|p| p.value).collect()
        }
        None => {
            if !s.checkpoints.is_empty() {
                bail!("checkpoints need a `target`");
            }
            let c = markovline::transfer::correlate(&map, &f, &g, s.n_max)?;
            for (n, v) in c.iter().enumerate() {
                t.push(vec![n.to_string(), num(v.re), num(v.im), String::new()]);
            }
            c
        }
    };
    r.tables.push(t);
    r.value("mass", g.integral());
    if let Some(pat) = &s.exact_pattern {
        if pat.is_empty() {
            bail!("exact_pattern is empty");
        }
        let bad = values.iter().enumerate().find(|(n, v)| **v != Complex64::new(pat[n % pat.len()], 0.0));
        r.check(
            "exact_pattern",
            bad.is_none(),
            match bad {
                None => format!("c_n follows {pat:?} for n = 0..={}", s.n_max),
                Some((n, v)) => format!("c_{n} = {}", c_str(*v)),
            },
        );
    }
    Ok(r)
}

pub fn ggm_sweep(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.ggm_sweep, "ggm-sweep")?;
    let map = ctx.map()?;
    let f = config::observable_from_value(&s.f, ctx.dir)?;
    let g = config::observable_from_value(&s.g, ctx.dir)?;
    let family = config::parse_family(&s.family)?;
    let placement = match &s.starts {
        Some(v) => Placement::Starts(v.clone()),
        None => Placement::Centered,
    };
    let quad = s.quadrature.core();
    let rep = mixing::ggm_joint_sweep(&map, &f, &g, family, &s.sizes, &placement, &s.n_list, quad, s.ratio)?;
    let mut r = Report::default();
    let mut t = Table::new("ggm", &["functional", "size", "start", "n", "value_re", "value_im", "residual"]);
    for p in &rep.points {
        t.push(vec![
            rep.functional.id().into(),
            num(p.size),
            num(p.start),
            p.n.to_string(),
            num(p.value.re),
            num(p.value.im),
            num(p.residual),
        ]);
    }
    r.tables.push(t);
    let mut prof = Table::new("profile", &["axis", "key", "sup_residual"]);
    for (n, v) in &rep.profile_n {
        prof.push(vec!["n".into(), n.to_string(), num(*v)]);
    }
    for (l, v) in &rep.profile_size {
        prof.push(vec!["size".into(), num(*l), num(*v)]);
    }
    for (l, v) in &rep.joint_sup {
        prof.push(vec!["joint".into(), num(*l), num(*v)]);
    }
    r.tables.push(prof);
    r.value("functional", rep.functional.id());
    r.value("target", c_str(rep.target));
    r.value("infimum", rep.infimum);
    let decays = match s.axis.as_str() {
        "joint" => rep.verdict == Verdict::Decays,
        "n" => rep.decays_in_n(s.ratio),
        "size" => rep.decays_in_size(s.ratio),
        other => bail!("unknown axis `{other}` (use joint, n or size)"),
    };
    r.value("decays", decays);
    if let Some(e) = &s.expect {
        let want = match e.as_str() {
            "decays" => true,
            "no-decay" => false,
            other => bail!("unknown expectation `{other}` (use decays or no-decay)"),
        };
        r.check(
            &format!("decay_along_{}", s.axis),
            decays == want,
            format!("expected {e}, ratio {}", s.ratio),
        );
    }
    if let Some(b) = &s.band {
        let worst = rep
            .points
            .iter()
            .map(|p| (p.value - b.center).norm() - (b.slope * p.n as f64 / p.size + b.tolerance))
            .fold(f64::NEG_INFINITY, f64::max);
        r.value("band_excess", worst);
        r.check(
            "band",
            worst <= 0.0,
            format!("|value − {}| ≤ {}·n/|V| + {:e}; worst excess {worst:e}", b.center, b.slope, b.tolerance),
        );
    }
    if let Some(tol) = s.factorization_tolerance {
        let mut ft = Table::new("factorization", &["size", "start", "n", "window_re", "window_im", "prefactor_re", "prefactor_im", "local_re", "local_im", "residual"]);
        let mut worst: f64 = 0.0;
        for &m in &s.sizes {
            let starts = match &placement {
                Placement::Centered => vec![-(m as i64 / 2)],
                Placement::Starts(v) => v.clone(),
            };
            for st in starts {
                for &n in &s.n_list {
                    let fc = mixing::factorization_check(&map, &f, &g, (st, st + m as i64 - 1), n, quad)?;
                    worst = worst.max(fc.residual);
                    ft.push(vec![
                        m.to_string(),
                        st.to_string(),
                        n.to_string(),
                        num(fc.window_value.re),
                        num(fc.window_value.im),
                        num(fc.prefactor.re),
                        num(fc.prefactor.im),
                        num(fc.local.re),
                        num(fc.local.im),
                        num(fc.residual),
                    ]);
                }
            }
        }
        r.tables.push(ft);
        r.value("factorization_residual", worst);
        r.check("factorization", worst <= tol, format!("worst residual {worst:e}, tolerance {tol:e}"));
    }
    Ok(r)
}

pub fn ave_check(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.ave_check, "ave-check")?;
    let map = ctx.map()?;
    let mut r = Report::default();
    let mut windows: Vec<(i64, i64)> = s.windows.iter().map(|w| (w[0], w[1])).collect();
    windows.extend(s.sizes.iter().map(|&m| (-(m as i64 / 2), m as i64 - 1 - m as i64 / 2)));
    if !windows.is_empty() {
        let f = s.observable.as_ref().map(|v| config::observable_from_value(v, ctx.dir)).transpose()?;
        let ns: Vec<usize> = (1..=s.n_max).collect();
        let pts = mixing::ave_invariance_check(&map, f.as_ref(), &windows, &ns, s.quadrature.core())?;
        let mut t = Table::new(
            "ave_check",
            &["lo", "hi", "n", "inner_cells", "outer_cells", "sandwich", "symdiff", "symdiff_exact", "bound", "jump_bound", "average_shift", "margin"],
        );
        let mut failures = 0;
        for p in &pts {
            failures += !p.holds(s.quad_tolerance) as usize;
            t.push(vec![
                p.window.0.to_string(),
                p.window.1.to_string(),
                p.n.to_string(),
                p.inner.len().to_string(),
                p.outer.len().to_string(),
                p.sandwich_holds.to_string(),
                num(p.symmetric_difference),
                p.symmetric_difference_exact.to_string(),
                num(p.bound),
                num(p.jump_bound),
                p.average_shift.map(num).unwrap_or_default(),
                num(p.margin),
            ]);
        }
        r.tables.push(t);
        r.check(
            "sandwich_and_invariance",
            failures == 0,
            format!("{failures} of {} (window, n) points fail", pts.len()),
        );
    }
    if let Some(e) = &s.estimate {
        let f = config::observable_from_value(&e.observable, ctx.dir)?;
        let family = config::parse_family(&e.family)?;
        let est = observables::ave_estimate(&f, family, map.partition(), &e.sizes, &DEFAULT_OFFSETS, e.tolerance)?;
        let mut t = Table::new("ave_estimate", &["size", "mean_re", "mean_im", "deviation"]);
        for sw in &est.sizes {
            t.push(vec![num(sw.size), num(sw.mean.re), num(sw.mean.im), num(sw.deviation)]);
        }
        r.tables.push(t);
        r.value("ave_estimate", c_str(est.estimate));
        r.value("ave_reference", c_str(est.reference));
        r.value("uniformity_residual", est.uniformity_residual);
        if let Some(want) = e.expect_uniform {
            r.check(
                "uniform_average",
                est.uniform == want,
                format!("residual {:e} against tolerance {:e}; expected uniform = {want}", est.uniformity_residual, e.tolerance),
            );
        }
    }
    if let Some(sl) = &s.slicing {
        let f = config::observable_from_value(&sl.observable, ctx.dir)?;
        let kernel = ctx.kernel()?;
        let pi = StateVector::delta(0).evolve(&kernel, sl.steps);
        let mut t = Table::new("slicing", &["ell", "direct_re", "direct_im", "s_ell_norm", "s_ell_bound", "s_tail_norm", "s_tail_bound", "decomposition_error"]);
        let mut ok = true;
        for &ell in &sl.ell {
            let rep = mixing::slicing_decomposition(&pi, &f, ell)?;
            ok &= rep.bounds_hold;
            t.push(vec![
                ell.to_string(),
                num(rep.direct.re),
                num(rep.direct.im),
                num(rep.s_ell.norm()),
                num(rep.s_ell_bound),
                num(rep.s_tail.norm()),
                num(rep.s_tail_bound),
                num(rep.decomposition_error),
            ]);
        }
        r.tables.push(t);
        r.check("slicing_bounds", ok, format!("slice bounds hold for ell in {:?}", sl.ell));
    }
    if r.checks.is_empty() {
        bail!("[ave-check] needs windows, sizes, estimate or slicing");
    }
    Ok(r)
}

pub fn orbits(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.orbits, "orbits")?;
    let map = ctx.map()?;
    let mut r = Report::default();
    if let Some(it) = &s.itinerary {
        let i = orbits::itinerary(&map, it.x0, it.n);
        let mut t = Table::new("itinerary", &["k", "cell"]);
        for (k, c) in i.cells.iter().enumerate() {
            t.push(vec![k.to_string(), c.to_string()]);
        }
        r.tables.push(t);
    }
    if let Some(m) = &s.markov {
        let seed = ctx.seed()?;
        let rep = orbits::markov_property_test(&map, m.start, m.samples, m.horizon, seed, m.min_count)?;
        let mut t = Table::new("transitions", &["from", "to", "count", "row_count", "empirical", "expected", "sigma", "deviation", "within"]);
        for e in &rep.entries {
            t.push(vec![
                e.from.to_string(),
                e.to.to_string(),
                e.count.to_string(),
                e.row_count.to_string(),
                num(e.empirical),
                num(e.expected),
                num(e.sigma),
                num(e.deviation),
                e.within.to_string(),
            ]);
        }
        r.tables.push(t);
        r.value("markov_entries", rep.entries.len() as i64);
        r.value("markov_untested_transitions", rep.untested_transitions as i64);
        r.value("markov_max_deviation", rep.max_deviation);
        r.value("markov_max_z", rep.max_z);
        r.check(
            "markov_within_3_sigma",
            rep.all_within,
            format!("{} tested entries, max |z| = {:.3}", rep.entries.len(), rep.max_z),
        );
    }
    if let Some(e) = &s.escape {
        let seed = ctx.seed()?;
        let rep = orbits::escape_diagnostics(&map, e.start, e.samples, e.horizon, e.radius, seed)?;
        let mut t = Table::new("escape", &["samples", "horizon", "radius", "returned", "escaped_plus", "escaped_minus"]);
        t.push(vec![
            rep.samples.to_string(),
            rep.horizon.to_string(),
            num(rep.radius),
            num(rep.returned),
            num(rep.escaped_plus),
            num(rep.escaped_minus),
        ]);
        r.tables.push(t);
        r.value("returned", rep.returned);
        if let Some(min) = e.min_returned {
            r.check("returned", rep.returned >= min, format!("returned fraction {} (minimum {min})", rep.returned));
        }
    }
    if let Some(o) = &s.overlap {
        let kernel = ctx.kernel()?;
        let cells: BTreeSet<i64> = o.cells.iter().copied().collect();
        let mut t = Table::new("overlap", &["n", "overlap_cells"]);
        let mut total = 0;
        for n in 0..=o.n_max {
            let v = orbits::image_overlap_measure(&kernel, &cells, n);
            total += v;
            t.push(vec![n.to_string(), v.to_string()]);
        }
        r.tables.push(t);
        if let Some(want) = o.expect_zero {
            r.check("overlap_zero", (total == 0) == want, format!("total overlap {total} cells, expected zero = {want}"));
        }
    }
    Ok(r)
}

pub fn cylinders(ctx: &Ctx) -> Result<Report> {
    let s = section(&ctx.config.cylinders, "cylinders")?;
    let map = ctx.map()?;
    let mut r = Report::default();
    if !s.words.is_empty() {
        let mut t = Table::new("cylinders", &["word", "left", "right", "length"]);
        for w in &s.words {
            let c = orbits::cylinder(&map, w).with_context(|| format!("word {w:?}"))?;
            let word = w.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
            t.push(vec![word, num(c.left), num(c.right), num(c.len())]);
        }
        r.tables.push(t);
    }
    if let Some(d) = &s.distortion {
        let rep = orbits::distortion_sweep(&map, d.start, d.n_max, d.max_words, d.samples)?;
        let mut t = Table::new("distortion", &["n", "max_ratio", "bound"]);
        for (n, v) in &rep.per_n {
            t.push(vec![n.to_string(), num(*v), num(rep.bound)]);
        }
        r.tables.push(t);
        r.value("max_ratio", rep.max_ratio);
        r.value("distortion_bound", rep.bound);
        r.value("words", rep.words as i64);
        if d.expect_within_bound {
            r.check(
                "distortion_bound",
                rep.max_ratio <= rep.bound,
                format!("max ratio {} over {} words, bound {}", rep.max_ratio, rep.words, rep.bound),
            );
        }
        if let Some(tol) = d.unit_tolerance {
            r.check("unit_ratio", (rep.max_ratio - 1.0).abs() <= tol, format!("max ratio {}", rep.max_ratio));
        }
    }
    Ok(r)
}
