//! Mehrotra predictor-corrector on the reduced KKT system.
//!
//! Internally the problem is `min ½xᵀPx + qᵀx  s.t.  Ax = b,  Gx + s = h,
//! s ≥ 0` with multipliers `y` (free) and `z ≥ 0` and stationarity
//! `Px + q + Aᵀy + Gᵀz = 0`. Two-sided rows of `A_in` become two rows of `G`;
//! rows with equal bounds join `A`.

use super::ldl::BandLdl;
use super::{CsrMatrix, KktResiduals, QpProblem, QpSolution, QpStatus, SolverSettings};

const STEP_FRACTION: f64 = 0.99;
const STALL_WINDOW: usize = 30;
const REFINE_STEPS: usize = 2;

#[derive(Debug, Clone, Copy)]
enum EqOrigin {
    Eq(usize),
    Ineq(usize),
}

struct Internal<'a> {
    n: usize,
    p: &'a CsrMatrix,
    q: &'a [f64],
    a: CsrMatrix,
    b: Vec<f64>,
    eq_origin: Vec<EqOrigin>,
    g: CsrMatrix,
    h: Vec<f64>,
    /// `(row of A_in, +1 upper side / −1 lower side)` per row of `G`.
    g_origin: Vec<(usize, f64)>,
    norm_b: f64,
    norm_h: f64,
    norm_q: f64,
}

impl<'a> Internal<'a> {
    fn new(p: &'a QpProblem) -> Self {
        let n = p.n();
        let mut a_t: Vec<(usize, usize, f64)> = p.a_eq.triplets().collect();
        let mut b = p.b_eq.clone();
        let mut eq_origin: Vec<EqOrigin> = (0..p.b_eq.len()).map(EqOrigin::Eq).collect();
        let mut g_t = Vec::new();
        let mut h = Vec::new();
        let mut g_origin = Vec::new();

        for r in 0..p.a_in.nrows() {
            let (l, u) = (p.lower[r], p.upper[r]);
            if l == u && l.is_finite() {
                let row = b.len();
                a_t.extend(p.a_in.row(r).map(|(c, v)| (row, c, v)));
                b.push(l);
                eq_origin.push(EqOrigin::Ineq(r));
                continue;
            }
            if u.is_finite() {
                let row = h.len();
                g_t.extend(p.a_in.row(r).map(|(c, v)| (row, c, v)));
                h.push(u);
                g_origin.push((r, 1.0));
            }
            if l.is_finite() {
                let row = h.len();
                g_t.extend(p.a_in.row(r).map(|(c, v)| (row, c, -v)));
                h.push(-l);
                g_origin.push((r, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(b.len(), n, &a_t);
        let g = CsrMatrix::from_triplets(h.len(), n, &g_t);
        let inf_norm = |v: &[f64]| v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        Self {
            n,
            p: &p.quadratic_cost,
            q: &p.linear_cost,
            norm_b: inf_norm(&b),
            norm_h: inf_norm(&h),
            norm_q: inf_norm(&p.linear_cost),
            a,
            b,
            eq_origin,
            g,
            h,
            g_origin,
        }
    }

    fn me(&self) -> usize {
        self.b.len()
    }

    fn mg(&self) -> usize {
        self.h.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.mul_vec(x);
        x.iter()
            .zip(&px)
            .zip(self.q)
            .map(|((xi, pxi), qi)| 0.5 * xi * pxi + qi * xi)
            .sum()
    }

    /// `(r_d, r_p, r_g)` at the given point.
    fn residuals(
        &self,
        x: &[f64],
        y: &[f64],
        z: &[f64],
        s: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rd = self.p.mul_vec(x);
        for (r, qi) in rd.iter_mut().zip(self.q) {
            *r += qi;
        }
        self.a.mul_t_vec_acc(1.0, y, &mut rd);
        self.g.mul_t_vec_acc(1.0, z, &mut rd);
        let rp: Vec<f64> = self
            .a
            .mul_vec(x)
            .iter()
            .zip(&self.b)
            .map(|(ax, b)| ax - b)
            .collect();
        let rg: Vec<f64> = self
            .g
            .mul_vec(x)
            .iter()
            .zip(s)
            .zip(&self.h)
            .map(|((gx, si), hi)| gx + si - hi)
            .collect();
        (rd, rp, rg)
    }

    fn scaled(&self, rd: &[f64], rp: &[f64], rg: &[f64], gap: f64, obj: f64) -> KktResiduals {
        let inf = |v: &[f64]| v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        KktResiduals {
            primal: (inf(rp) / (1.0 + self.norm_b)).max(inf(rg) / (1.0 + self.norm_h)),
            dual: inf(rd) / (1.0 + self.norm_q),
            complementarity: gap.abs() / (1.0 + obj.abs()),
        }
    }

    fn kkt_factor(&self) -> BandLdl {
        let n = self.n;
        let mut edges: Vec<(usize, usize)> = self.p.triplets().map(|(r, c, _)| (r, c)).collect();
        for r in 0..self.mg() {
            let cols: Vec<usize> = self.g.row(r).map(|(c, _)| c).collect();
            for (i, &a) in cols.iter().enumerate() {
                for &b in &cols[..i] {
                    edges.push((a, b));
                }
            }
        }
        edges.extend(self.a.triplets().map(|(r, c, _)| (n + r, c)));
        let mut signs = vec![1.0; n];
        signs.extend(std::iter::repeat(-1.0).take(self.me()));
        BandLdl::new(n + self.me(), edges, signs)
    }

    /// Assembles `[P + GᵀWG + δI, Aᵀ; A, −δI]` and factors it.
    fn assemble(&self, f: &mut BandLdl, w: &[f64], delta: f64) {
        let n = self.n;
        f.clear();
        for (r, c, v) in self.p.triplets() {
            if c <= r {
                f.add(r, c, v);
            }
        }
        for (r, &wr) in w.iter().enumerate() {
            let row: Vec<(usize, f64)> = self.g.row(r).collect();
            for (i, &(a, va)) in row.iter().enumerate() {
                f.add(a, a, wr * va * va);
                for &(b, vb) in &row[..i] {
                    f.add(a, b, wr * va * vb);
                }
            }
        }
        for (r, c, v) in self.a.triplets() {
            f.add(n + r, c, v);
        }
        for i in 0..n {
            f.add(i, i, delta);
        }
        for i in 0..self.me() {
            f.add(n + i, n + i, -delta);
        }
        f.factor(delta * 1e-4);
    }

    /// Applies the unregularized reduced KKT matrix.
    fn kkt_apply(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let (vx, vy) = v.split_at(n);
        let mut top = self.p.mul_vec(vx);
        let gx: Vec<f64> = self
            .g
            .mul_vec(vx)
            .iter()
            .zip(w)
            .map(|(g, wi)| g * wi)
            .collect();
        self.g.mul_t_vec_acc(1.0, &gx, &mut top);
        self.a.mul_t_vec_acc(1.0, vy, &mut top);
        top.extend(self.a.mul_vec(vx));
        top
    }

    fn kkt_solve(&self, f: &BandLdl, w: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        f.solve(&mut sol);
        for _ in 0..REFINE_STEPS {
            let kx = self.kkt_apply(w, &sol);
            let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
            let rn = r.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            if rn <= 1e-12 * (1.0 + rhs.iter().fold(0.0, |m: f64, x| m.max(x.abs()))) {
                break;
            }
            f.solve(&mut r);
            for (s, d) in sol.iter_mut().zip(&r) {
                *s += d;
            }
        }
        sol
    }

    /// Newton direction for complementarity target `rc` (`s∘z` replaced by `rc`).
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        f: &BandLdl,
        w: &[f64],
        s: &[f64],
        rd: &[f64],
        rp: &[f64],
        rg: &[f64],
        rc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let t: Vec<f64> = (0..self.mg())
            .map(|i| w[i] * rg[i] - rc[i] / s[i])
            .collect();
        let mut rhs: Vec<f64> = rd.iter().map(|v| -v).collect();
        self.g.mul_t_vec_acc(-1.0, &t, &mut rhs);
        rhs.extend(rp.iter().map(|v| -v));
        let sol = self.kkt_solve(f, w, &rhs);
        let (dx, dy) = sol.split_at(n);
        let gdx = self.g.mul_vec(dx);
        let ds: Vec<f64> = gdx.iter().zip(rg).map(|(g, r)| -r - g).collect();
        let dz: Vec<f64> = (0..self.mg())
            .map(|i| w[i] * (gdx[i] + rg[i]) - rc[i] / s[i])
            .collect();
        (dx.to_vec(), dy.to_vec(), dz, ds)
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

pub(super) fn solve(p: &QpProblem, st: &SolverSettings) -> QpSolution {
    let sys = Internal::new(p);
    let (n, mg) = (sys.n, sys.mg());
    let delta = 1e-9 * (1.0 + sys.p.max_abs());
    let mut factor = sys.kkt_factor();

    // Starting point: minimize ½xᵀPx + ½‖Gx − h‖² subject to Ax = b. The
    // linear cost is left out so that large prices do not push the start far
    // outside the box; without inequalities this one solve is the answer.
    let w1 = vec![1.0; mg];
    sys.assemble(&mut factor, &w1, delta);
    let mut rhs: Vec<f64> = if mg == 0 {
        sys.q.iter().map(|v| -v).collect()
    } else {
        vec![0.0; n]
    };
    sys.g.mul_t_vec_acc(1.0, &sys.h, &mut rhs);
    rhs.extend(&sys.b);
    let sol = sys.kkt_solve(&factor, &w1, &rhs);
    let x = sol[..n].to_vec();
    let y = sol[n..].to_vec();

    if mg == 0 {
        let (rd, rp, rg) = sys.residuals(&x, &y, &[], &[]);
        let obj = sys.objective(&x);
        let res = sys.scaled(&rd, &rp, &rg, 0.0, obj);
        let status = if res.max() <= st.tol {
            QpStatus::Optimal
        } else if res.primal > st.tol {
            QpStatus::Infeasible
        } else {
            QpStatus::MaxIterations
        };
        return finish(
            &sys,
            p,
            Iterate {
                x,
                y,
                z: vec![],
                s: vec![],
            },
            status,
            res,
            0,
            false,
        );
    }

    let gx = sys.g.mul_vec(&x);
    let mut s: Vec<f64> = sys.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if smin < 1.0 {
        let shift = 1.0 - smin.min(0.0);
        s.iter_mut().for_each(|v| *v = v.max(0.0) + shift);
    }
    let mut z = vec![1.0 + sys.norm_q; mg];
    let sz = dot(&s, &z);
    let ds0 = 0.5 * sz / z.iter().sum::<f64>();
    let dz0 = 0.5 * sz / s.iter().sum::<f64>();
    s.iter_mut().for_each(|v| *v += ds0);
    z.iter_mut().for_each(|v| *v += dz0);

    let mut it = Iterate { x, y, z, s };
    let mut best_primal = f64::INFINITY;
    let mut since_primal_progress = 0usize;
    let mut tiny_steps = 0usize;
    let mut status = QpStatus::MaxIterations;
    let mut res = KktResiduals::default();
    let mut iterations = 0;

    for k in 0..st.max_iter {
        iterations = k;
        let (rd, rp, rg) = sys.residuals(&it.x, &it.y, &it.z, &it.s);
        let gap = dot(&it.s, &it.z);
        let obj = sys.objective(&it.x);
        res = sys.scaled(&rd, &rp, &rg, gap, obj);
        if res.max() <= st.tol {
            status = QpStatus::Optimal;
            break;
        }

        // Farkas direction: Aᵀy + Gᵀz ≈ 0 with bᵀy + hᵀz < 0.
        let mut farkas = vec![0.0; n];
        sys.a.mul_t_vec_acc(1.0, &it.y, &mut farkas);
        sys.g.mul_t_vec_acc(1.0, &it.z, &mut farkas);
        let certificate = dot(&sys.b, &it.y) + dot(&sys.h, &it.z);
        if res.primal > st.tol && certificate < 0.0 && inf_norm(&farkas) <= 1e-9 * -certificate {
            status = QpStatus::Infeasible;
            break;
        }

        if res.primal < 0.9 * best_primal {
            best_primal = res.primal;
            since_primal_progress = 0;
        } else {
            since_primal_progress += 1;
        }
        if res.primal > st.tol && (since_primal_progress >= STALL_WINDOW || tiny_steps >= 10) {
            status = QpStatus::Infeasible;
            break;
        }

        let w: Vec<f64> = it.z.iter().zip(&it.s).map(|(z, s)| z / s).collect();
        sys.assemble(&mut factor, &w, delta);

        let mu = gap / mg as f64;
        let rc_aff: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| s * z).collect();
        let (_, _, dz_a, ds_a) = sys.direction(&factor, &w, &it.s, &rd, &rp, &rg, &rc_aff);
        let alpha_aff = max_step(&it.s, &ds_a).min(max_step(&it.z, &dz_a));
        let mu_aff = (0..mg)
            .map(|i| (it.s[i] + alpha_aff * ds_a[i]) * (it.z[i] + alpha_aff * dz_a[i]))
            .sum::<f64>()
            / mg as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc: Vec<f64> = (0..mg)
            .map(|i| it.s[i] * it.z[i] + ds_a[i] * dz_a[i] - sigma * mu)
            .collect();
        let (dx, dy, dz, ds) = sys.direction(&factor, &w, &it.s, &rd, &rp, &rg, &rc);
        let alpha = (STEP_FRACTION * max_step(&it.s, &ds).min(max_step(&it.z, &dz))).min(1.0);
        if alpha < 1e-10 {
            tiny_steps += 1;
        } else {
            tiny_steps = 0;
        }

        for (v, d) in it.x.iter_mut().zip(&dx) {
            *v += alpha * d;
        }
        for (v, d) in it.y.iter_mut().zip(&dy) {
            *v += alpha * d;
        }
        for (v, d) in it.z.iter_mut().zip(&dz) {
            *v = (*v + alpha * d).max(f64::MIN_POSITIVE);
        }
        for (v, d) in it.s.iter_mut().zip(&ds) {
            *v = (*v + alpha * d).max(f64::MIN_POSITIVE);
        }
        iterations = k + 1;
    }

    if status == QpStatus::Optimal && st.polish {
        if let Some((polished, pres)) = polish(&sys, &it, st.tol) {
            return finish(&sys, p, polished, status, pres, iterations, true);
        }
    }
    finish(&sys, p, it, status, res, iterations, false)
}

/// Re-solves the equality-constrained QP on the identified active set.
/// Returns `None` when the candidate is not primal and dual feasible.
fn polish(sys: &Internal<'_>, it: &Iterate, tol: f64) -> Option<(Iterate, KktResiduals)> {
    let n = sys.n;
    let me = sys.me();
    let active: Vec<usize> = (0..sys.mg()).filter(|&i| it.z[i] > it.s[i]).collect();
    let na = active.len();
    let dim = n + me + na;

    let mut a_rows: Vec<Vec<(usize, f64)>> = (0..me).map(|r| sys.a.row(r).collect()).collect();
    a_rows.extend(active.iter().map(|&r| sys.g.row(r).collect::<Vec<_>>()));
    let mut rhs_lo: Vec<f64> = sys.b.clone();
    rhs_lo.extend(active.iter().map(|&r| sys.h[r]));

    let mut edges: Vec<(usize, usize)> = sys.p.triplets().map(|(r, c, _)| (r, c)).collect();
    for (r, row) in a_rows.iter().enumerate() {
        edges.extend(row.iter().map(|&(c, _)| (n + r, c)));
    }
    let mut signs = vec![1.0; n];
    signs.extend(std::iter::repeat(-1.0).take(me + na));
    let mut f = BandLdl::new(dim, edges, signs);

    let delta = 1e-9 * (1.0 + sys.p.max_abs());
    for (r, c, v) in sys.p.triplets() {
        if c <= r {
            f.add(r, c, v);
        }
    }
    for (r, row) in a_rows.iter().enumerate() {
        for &(c, v) in row {
            f.add(n + r, c, v);
        }
    }
    for i in 0..n {
        f.add(i, i, delta);
    }
    for i in 0..me + na {
        f.add(n + i, n + i, -delta);
    }
    f.factor(delta * 1e-4);

    let apply = |v: &[f64]| -> Vec<f64> {
        let (vx, vl) = v.split_at(n);
        let mut top = sys.p.mul_vec(vx);
        for (r, row) in a_rows.iter().enumerate() {
            for &(c, a) in row {
                top[c] += a * vl[r];
            }
        }
        let bottom = a_rows
            .iter()
            .map(|row| row.iter().map(|&(c, a)| a * vx[c]).sum::<f64>());
        top.extend(bottom);
        top
    };

    let mut rhs: Vec<f64> = sys.q.iter().map(|v| -v).collect();
    rhs.extend(&rhs_lo);
    // Refinement started from the interior iterate acts as a proximal-point
    // iteration, so degenerate multipliers stay close to the central path.
    let mut sol = it.x.clone();
    sol.extend(&it.y);
    sol.extend(active.iter().map(|&r| it.z[r]));
    for _ in 0..25 {
        let kx = apply(&sol);
        let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
        if inf_norm(&r) <= 1e-15 * (1.0 + inf_norm(&rhs)) {
            break;
        }
        f.solve(&mut r);
        for (s, d) in sol.iter_mut().zip(&r) {
            *s += d;
        }
    }

    let x = sol[..n].to_vec();
    let y = sol[n..n + me].to_vec();
    let mut z = vec![0.0; sys.mg()];
    for (k, &r) in active.iter().enumerate() {
        z[r] = sol[n + me + k];
    }
    let zscale = 1.0 + inf_norm(&it.z);
    if z.iter().any(|&v| v < -tol * zscale) {
        return None;
    }
    z.iter_mut().for_each(|v| *v = v.max(0.0));

    let gx = sys.g.mul_vec(&x);
    let slack: Vec<f64> = sys.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
    if slack.iter().any(|&v| v < -tol * (1.0 + sys.norm_h)) {
        return None;
    }
    let s: Vec<f64> = slack.iter().map(|v| v.max(0.0)).collect();
    let (rd, rp, rg) = sys.residuals(&x, &y, &z, &s);
    let obj = sys.objective(&x);
    let res = sys.scaled(&rd, &rp, &rg, dot(&s, &z), obj);
    (res.max() <= tol).then_some((Iterate { x, y, z, s }, res))
}

fn finish(
    sys: &Internal<'_>,
    p: &QpProblem,
    it: Iterate,
    status: QpStatus,
    kkt_residuals: KktResiduals,
    iterations: usize,
    polished: bool,
) -> QpSolution {
    let mut eq_duals = vec![0.0; p.b_eq.len()];
    let mut ineq_duals = vec![0.0; p.a_in.nrows()];
    for (k, origin) in sys.eq_origin.iter().enumerate() {
        match *origin {
            EqOrigin::Eq(i) => eq_duals[i] = -it.y[k],
            EqOrigin::Ineq(r) => ineq_duals[r] = it.y[k],
        }
    }
    for (k, &(r, sign)) in sys.g_origin.iter().enumerate() {
        ineq_duals[r] += sign * it.z[k];
    }
    let objective = p.objective(&it.x);
    QpSolution {
        x: it.x,
        eq_duals,
        ineq_duals,
        status,
        kkt_residuals,
        objective,
        iterations,
        polished,
    }
}
