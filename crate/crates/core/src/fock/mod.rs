//! Full quantum trajectories: centre-of-mass kets for the two electronic
//! states in a Fock basis, evolved in a local frame that is recentred on the
//! mean oscillator amplitude at every quantum jump.

pub mod displacement;
pub mod tables;

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;

use crate::binio::{Reader, Writer};
use crate::phasespace::{self, RecoilAngles};
use crate::record::{JumpEvent, Sample, TrajectoryRecord};
use crate::semiquantum::RENORM_THRESHOLD;
use crate::{Error, NumericalControls, PhysParams, Result, C64};

pub use displacement::{coherent_state, displace, displacement_matrix, CMatrix};
pub use tables::{apply_modulated_cos, build_trig_tables, classical_phase, matrix_element_2n, TrigTables};

/// Fraction of the basis, at the top, watched by the tail monitor.
pub const TAIL_FRACTION: f64 = 0.05;

/// Amplitudes whose squared magnitude falls below this fraction of the state
/// norm are treated as zero by the banded kernel.
const SKIP_REL_SQ: f64 = 1e-40;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Unnormalized local-frame kets for the ground (`psi_minus`) and excited
/// (`psi_plus`) electronic states, the frame offset and the time.
#[derive(Debug, Clone, PartialEq)]
pub struct FockPair {
    pub psi_minus: Vec<C64>,
    pub psi_plus: Vec<C64>,
    pub frame_alpha: C64,
    pub t: f64,
}

/// Normalized reduced-state moments in the local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// ⟨a⟩
    pub a: C64,
    /// ⟨a† a⟩
    pub ada: f64,
    /// ⟨a a⟩
    pub aa: C64,
}

fn sq_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Unnormalized branch sums ⟨v|a|v⟩, ⟨v|a†a|v⟩, ⟨v|aa|v⟩.
fn branch_moments(v: &[C64]) -> (C64, f64, C64) {
    let mut a = ZERO;
    let mut ada = 0.0;
    let mut aa = ZERO;
    for n in 0..v.len() {
        let nf = n as f64;
        ada += nf * v[n].norm_sqr();
        if n + 1 < v.len() {
            a += v[n].conj() * v[n + 1] * (nf + 1.0).sqrt();
        }
        if n + 2 < v.len() {
            aa += v[n].conj() * v[n + 2] * ((nf + 1.0) * (nf + 2.0)).sqrt();
        }
    }
    (a, ada, aa)
}

impl FockPair {
    /// Electronic ground state with the local vacuum.
    pub fn ground(n_max: usize, frame_alpha: C64) -> Self {
        let mut psi_minus = vec![ZERO; n_max];
        psi_minus[0] = C64::new(1.0, 0.0);
        Self {
            psi_minus,
            psi_plus: vec![ZERO; n_max],
            frame_alpha,
            t: 0.0,
        }
    }

    /// Electronic ground state with the given local ket.
    pub fn from_local(psi_minus: Vec<C64>, frame_alpha: C64, t: f64) -> Self {
        let n = psi_minus.len();
        Self {
            psi_minus,
            psi_plus: vec![ZERO; n],
            frame_alpha,
            t,
        }
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.psi_minus.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        sq_norm(&self.psi_minus) + sq_norm(&self.psi_plus)
    }

    pub fn excited_population(&self) -> f64 {
        let n = self.norm_sqr();
        if n > 0.0 {
            sq_norm(&self.psi_plus) / n
        } else {
            0.0
        }
    }

    /// Normalized population in the top `TAIL_FRACTION` of the basis.
    pub fn tail_population(&self) -> f64 {
        let n = self.n_max();
        let start = n - ((n as f64 * TAIL_FRACTION).ceil() as usize).max(1);
        let tail = sq_norm(&self.psi_minus[start..]) + sq_norm(&self.psi_plus[start..]);
        let total = self.norm_sqr();
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }

    fn scale(&mut self, s: f64) {
        for z in self.psi_minus.iter_mut().chain(self.psi_plus.iter_mut()) {
            *z *= s;
        }
    }

    /// One past the last index carrying non-negligible amplitude.
    fn support(&self, cut_sq: f64) -> usize {
        (0..self.n_max())
            .rev()
            .find(|&i| self.psi_minus[i].norm_sqr() + self.psi_plus[i].norm_sqr() > cut_sq)
            .map_or(0, |i| i + 1)
    }
}

pub fn local_moments(s: &FockPair) -> Result<Moments> {
    let n = s.norm_sqr();
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let (a1, d1, q1) = branch_moments(&s.psi_minus);
    let (a2, d2, q2) = branch_moments(&s.psi_plus);
    Ok(Moments {
        a: (a1 + a2) / n,
        ada: (d1 + d2) / n,
        aa: (q1 + q2) / n,
    })
}

/// ⟨a⟩ on the normalized reduced centre-of-mass state, in the local frame.
pub fn expect_a_local(s: &FockPair) -> Result<C64> {
    Ok(local_moments(s)?.a)
}

/// ⟨a⟩ on the normalized excited-state ket alone, in the local frame.
pub fn expect_a_excited(s: &FockPair) -> Result<C64> {
    let n = sq_norm(&s.psi_plus);
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(branch_moments(&s.psi_plus).0 / n)
}

/// Amplitude of oscillation in wavelengths, (eta/pi) sqrt⟨(alpha* + a†)(alpha + a)⟩.
pub fn amplitude_global(s: &FockPair, p: &PhysParams) -> Result<f64> {
    let m = local_moments(s)?;
    let al = s.frame_alpha;
    let n = al.norm_sqr() + 2.0 * (al.conj() * m.a).re + m.ada;
    Ok(p.eta / std::f64::consts::PI * n.max(0.0).sqrt())
}

pub fn jump_rate_q(s: &FockPair, p: &PhysParams) -> Result<f64> {
    let n = s.norm_sqr();
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(p.gamma() * sq_norm(&s.psi_plus) / n)
}

/// Quantum jump in the local frame. The excited ket, recentred so that its
/// mean amplitude is zero, becomes the new ground ket; the frame absorbs the
/// removed mean plus the recoil.
pub fn apply_jump_q(s: &FockPair, a: &RecoilAngles, p: &PhysParams) -> Result<FockPair> {
    let beta = expect_a_excited(s)?;
    let mut psi = displace(-beta, &s.psi_plus)?;
    let n = sq_norm(&psi).sqrt();
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    for z in psi.iter_mut() {
        *z /= n;
    }
    let kick = phasespace::recoil_increment(a, s.t, p);
    Ok(FockPair::from_local(psi, s.frame_alpha + beta + kick, s.t))
}

/// Scratch vectors for one RK4 step.
#[derive(Debug, Clone)]
struct Workspace {
    ph: [Vec<C64>; 3],
    z1: Vec<C64>,
    z2: Vec<C64>,
    y1: Vec<C64>,
    y2: Vec<C64>,
    km: [Vec<C64>; 4],
    kp: [Vec<C64>; 4],
    ms: Vec<C64>,
    ps: Vec<C64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let v = || vec![ZERO; n];
        Self {
            ph: [v(), v(), v()],
            z1: v(),
            z2: v(),
            y1: v(),
            y2: v(),
            km: [v(), v(), v(), v()],
            kp: [v(), v(), v(), v()],
            ms: v(),
            ps: v(),
        }
    }
}

/// Right-hand side of the local-frame ket equations at one time.
#[allow(clippy::too_many_arguments)]
fn derivative(
    tables: &TrigTables,
    ph: &[C64],
    cs: (f64, f64),
    m_in: &[C64],
    p_in: &[C64],
    len: usize,
    cut_sq: f64,
    half_gamma: f64,
    z1: &mut [C64],
    z2: &mut [C64],
    y1: &mut [C64],
    y2: &mut [C64],
    km: &mut [C64],
    kp: &mut [C64],
) {
    for n in 0..len {
        let e = ph[n].conj();
        z1[n] = p_in[n] * e;
        z2[n] = m_in[n] * e;
    }
    y1[..len].fill(ZERO);
    y2[..len].fill(ZERO);
    tables.accumulate_pair(cs.0, cs.1, z1, z2, y1, y2, len, cut_sq);
    for n in 0..len {
        km[n] = -(y1[n] * ph[n]);
        kp[n] = y2[n] * ph[n] - p_in[n] * half_gamma;
    }
}

/// Advances the kets by one RK4 step from `t0`. `hi` bounds the support on
/// entry; the returned value bounds it on exit.
fn rk4_step(
    ws: &mut Workspace,
    tables: &TrigTables,
    p: &PhysParams,
    s: &mut FockPair,
    t0: f64,
    dt: f64,
    hi: usize,
) -> usize {
    let n_max = s.n_max();
    let mut len = hi;
    for _ in 0..4 {
        len = tables.reach(len);
    }
    let len = len.min(n_max);
    let cut_sq = SKIP_REL_SQ * s.norm_sqr_within(hi);
    let half_gamma = 0.5 * p.gamma();
    let times = [t0, t0 + 0.5 * dt, t0 + dt];
    let mut cs = [(0.0, 0.0); 3];
    for (k, &t) in times.iter().enumerate() {
        tables::fill_phases(&mut ws.ph[k], p.omega_t * t, len);
        let phi = classical_phase(s.frame_alpha, t, p);
        cs[k] = (0.5 * p.rabi * phi.cos(), 0.5 * p.rabi * phi.sin());
    }
    let Workspace {
        ph,
        z1,
        z2,
        y1,
        y2,
        km,
        kp,
        ms,
        ps,
    } = ws;
    // stage coefficient and phase slot for k1..k4
    let stage = [(0.0, 0usize), (0.5, 1), (0.5, 1), (1.0, 2)];
    for (j, &(h, slot)) in stage.iter().enumerate() {
        let (m_in, p_in): (&[C64], &[C64]) = if j == 0 {
            (&s.psi_minus, &s.psi_plus)
        } else {
            let hdt = h * dt;
            for n in 0..len {
                ms[n] = s.psi_minus[n] + km[j - 1][n] * hdt;
                ps[n] = s.psi_plus[n] + kp[j - 1][n] * hdt;
            }
            (ms, ps)
        };
        let (km_j, kp_j) = (&mut km[j], &mut kp[j]);
        derivative(
            tables, &ph[slot], cs[slot], m_in, p_in, len, cut_sq, half_gamma, z1, z2, y1, y2, km_j, kp_j,
        );
    }
    let w = dt / 6.0;
    for n in 0..len {
        s.psi_minus[n] += (km[0][n] + (km[1][n] + km[2][n]) * 2.0 + km[3][n]) * w;
        s.psi_plus[n] += (kp[0][n] + (kp[1][n] + kp[2][n]) * 2.0 + kp[3][n]) * w;
    }
    s.t = t0 + dt;
    // drop negligible amplitude at the top of the support
    let cut_sq = SKIP_REL_SQ * s.norm_sqr_within(len);
    let mut top = len;
    while top > 0 && s.psi_minus[top - 1].norm_sqr() + s.psi_plus[top - 1].norm_sqr() <= cut_sq {
        s.psi_minus[top - 1] = ZERO;
        s.psi_plus[top - 1] = ZERO;
        top -= 1;
    }
    top
}

impl FockPair {
    fn norm_sqr_within(&self, len: usize) -> f64 {
        sq_norm(&self.psi_minus[..len]) + sq_norm(&self.psi_plus[..len])
    }
}

/// One RK4 step of the local-frame ket equations. Fails with a basis-overflow
/// error when the tail population exceeds `tail_tol` afterwards.
pub fn coherent_step_q(s: &FockPair, dt: f64, tables: &TrigTables, p: &PhysParams, tail_tol: f64) -> Result<FockPair> {
    check_tables(tables, s.n_max(), p)?;
    let mut out = s.clone();
    let mut ws = Workspace::new(s.n_max());
    let hi = s.support(0.0);
    rk4_step(&mut ws, tables, p, &mut out, s.t, dt, hi);
    let tail = out.tail_population();
    if tail > tail_tol {
        return Err(Error::BasisOverflow {
            t: out.t,
            tail,
            tol: tail_tol,
        });
    }
    Ok(out)
}

fn check_tables(tables: &TrigTables, n_max: usize, p: &PhysParams) -> Result<()> {
    if tables.n_max != n_max || tables.eta != p.eta {
        return Err(Error::invalid(format!(
            "tables built for eta={}, n_max={} used with eta={}, n_max={}",
            tables.eta, tables.n_max, p.eta, n_max
        )));
    }
    Ok(())
}

/// Step-by-step quantum trajectory integrator with tail monitoring.
#[derive(Debug, Clone)]
pub struct QuantumEngine {
    pub p: PhysParams,
    pub dt: f64,
    pub tail_tol: f64,
    pub tables: Arc<TrigTables>,
    pub pair: FockPair,
    pub step: u64,
    pub rescales: u64,
    /// Log of the factors divided out by mid-interval renormalizations.
    pub log_scale: f64,
    hi: usize,
    ws: Workspace,
}

impl PartialEq for QuantumEngine {
    fn eq(&self, o: &Self) -> bool {
        self.p == o.p
            && self.dt == o.dt
            && self.tail_tol == o.tail_tol
            && self.pair == o.pair
            && self.step == o.step
            && self.rescales == o.rescales
            && self.log_scale == o.log_scale
    }
}

impl QuantumEngine {
    pub fn new(p: PhysParams, c: &NumericalControls, tables: Arc<TrigTables>, alpha0: C64) -> Result<Self> {
        Self::with_state(p, c, tables, FockPair::ground(c.n_max, alpha0))
    }

    pub fn with_state(p: PhysParams, c: &NumericalControls, tables: Arc<TrigTables>, pair: FockPair) -> Result<Self> {
        check_tables(&tables, pair.n_max(), &p)?;
        let hi = pair.support(0.0);
        let n = pair.n_max();
        Ok(Self {
            p,
            dt: c.dt,
            tail_tol: c.tail_tol,
            tables,
            pair,
            step: 0,
            rescales: 0,
            log_scale: 0.0,
            hi,
            ws: Workspace::new(n),
        })
    }

    #[inline]
    pub fn t(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn sample(&self) -> Result<Sample> {
        Ok(Sample {
            t: self.t(),
            a: amplitude_global(&self.pair, &self.p)?,
            p_excited: self.pair.excited_population(),
        })
    }

    /// Unnormalized survival weight: the norm the kets would have without renormalization.
    pub fn survival(&self) -> f64 {
        self.pair.norm_sqr() * self.log_scale.exp()
    }

    fn renormalize(&mut self) -> Result<()> {
        let n = self.pair.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::ZeroNorm);
        }
        self.pair.scale(1.0 / n.sqrt());
        self.log_scale += n.ln();
        Ok(())
    }

    /// Coherent step, underflow guard and tail check; returns the jump rate.
    pub fn coherent(&mut self) -> Result<f64> {
        let t0 = self.t();
        let t1 = (self.step + 1) as f64 * self.dt;
        self.hi = rk4_step(
            &mut self.ws,
            &self.tables,
            &self.p,
            &mut self.pair,
            t0,
            t1 - t0,
            self.hi,
        );
        self.pair.t = t1;
        self.step += 1;
        let n_max = self.pair.n_max();
        let start = n_max - ((n_max as f64 * TAIL_FRACTION).ceil() as usize).max(1);
        if self.hi > start {
            let tail = self.pair.tail_population();
            if tail > self.tail_tol {
                return Err(Error::BasisOverflow {
                    t: t1,
                    tail,
                    tol: self.tail_tol,
                });
            }
        }
        if self.pair.norm_sqr() < RENORM_THRESHOLD {
            self.renormalize()?;
            self.rescales += 1;
        }
        jump_rate_q(&self.pair, &self.p)
    }

    /// Applies a jump with the given recoil now.
    pub fn jump(&mut self, angles: RecoilAngles) -> Result<JumpEvent> {
        let pre = self.pair.frame_alpha;
        self.pair = apply_jump_q(&self.pair, &angles, &self.p)?;
        self.log_scale = 0.0;
        self.hi = self.pair.support(0.0);
        Ok(JumpEvent {
            step: self.step,
            t: self.t(),
            angles,
            alpha_pre: pre,
            increment: self.pair.frame_alpha - pre,
        })
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<JumpEvent>> {
        let rate = self.coherent()?;
        let u: f64 = rng.random();
        if u < rate * self.dt {
            let angles = phasespace::sample_recoil(rng);
            Ok(Some(self.jump(angles)?))
        } else {
            Ok(None)
        }
    }

    pub fn run_to_step<R: Rng + ?Sized>(
        &mut self,
        target_step: u64,
        stride: u64,
        rng: &mut R,
        record: &mut TrajectoryRecord,
    ) -> Result<()> {
        let stride = stride.max(1);
        while self.step < target_step {
            if let Some(ev) = self.advance(rng)? {
                record.jumps.push(ev);
            }
            if self.step.is_multiple_of(stride) {
                record.samples.push(self.sample()?);
            }
        }
        record.final_alpha = self.pair.frame_alpha;
        record.final_t = self.t();
        record.rescales = self.rescales;
        Ok(())
    }

    /// Re-runs the integrator, applying recorded jumps at their recorded steps.
    pub fn replay(
        p: PhysParams,
        c: &NumericalControls,
        tables: Arc<TrigTables>,
        alpha0: C64,
        jumps: &[JumpEvent],
        n_steps: u64,
    ) -> Result<Self> {
        let mut eng = Self::new(p, c, tables, alpha0)?;
        let mut next = jumps.iter().peekable();
        while eng.step < n_steps {
            eng.coherent()?;
            if let Some(j) = next.peek() {
                if j.step == eng.step {
                    eng.jump(j.angles)?;
                    next.next();
                }
            }
        }
        Ok(eng)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.f64(self.p.eta);
        w.f64(self.p.omega_t);
        w.f64(self.p.rabi);
        w.f64(self.dt);
        w.f64(self.tail_tol);
        w.c64(self.pair.frame_alpha);
        w.f64(self.pair.t);
        w.c64_slice(&self.pair.psi_minus);
        w.c64_slice(&self.pair.psi_plus);
        w.u64(self.step);
        w.u64(self.rescales);
        w.f64(self.log_scale);
    }

    /// Restores a snapshot; `tables` must match the stored eta and basis size.
    pub fn decode(r: &mut Reader<'_>, tables: Arc<TrigTables>) -> Result<Self> {
        let p = PhysParams {
            eta: r.f64()?,
            omega_t: r.f64()?,
            rabi: r.f64()?,
        };
        let dt = r.f64()?;
        let tail_tol = r.f64()?;
        let frame_alpha = r.c64()?;
        let t = r.f64()?;
        let psi_minus = r.c64_vec()?;
        let psi_plus = r.c64_vec()?;
        if psi_minus.len() != psi_plus.len() {
            return Err(Error::Checkpoint("ket lengths differ".into()));
        }
        let pair = FockPair {
            psi_minus,
            psi_plus,
            frame_alpha,
            t,
        };
        check_tables(&tables, pair.n_max(), &p)?;
        let hi = pair.support(0.0);
        let n = pair.n_max();
        Ok(Self {
            p,
            dt,
            tail_tol,
            tables,
            pair,
            step: r.u64()?,
            rescales: r.u64()?,
            log_scale: r.f64()?,
            hi,
            ws: Workspace::new(n),
        })
    }
}

/// Runs a single quantum trajectory from the electronic ground state and the
/// local vacuum at frame offset `alpha0`.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory_q<R: Rng + ?Sized>(
    p: &PhysParams,
    c: &NumericalControls,
    tables: Arc<TrigTables>,
    t_final: f64,
    alpha0: C64,
    sample_stride: u64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    if !(t_final > 0.0) {
        return Err(Error::invalid(format!("t_final must be > 0, got {t_final}")));
    }
    let mut eng = QuantumEngine::new(*p, c, tables, alpha0)?;
    let mut rec = TrajectoryRecord {
        samples: vec![eng.sample()?],
        ..Default::default()
    };
    let n_steps = (t_final / c.dt).round() as u64;
    eng.run_to_step(n_steps, sample_stride, rng, &mut rec)?;
    Ok(rec)
}

/// Writes the normalized kets: header {n_max: u64, t, re/im frame} then
/// psi_minus and psi_plus as interleaved little-endian f64.
pub fn write_state_dump<W: Write>(mut w: W, s: &FockPair) -> Result<()> {
    let n = s.norm_sqr().sqrt();
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let mut buf = Writer::new();
    buf.u64(s.n_max() as u64);
    buf.f64(s.t);
    buf.f64(s.frame_alpha.re);
    buf.f64(s.frame_alpha.im);
    for z in s.psi_minus.iter().chain(&s.psi_plus) {
        buf.c64(z / n);
    }
    w.write_all(&buf.into_bytes())?;
    Ok(())
}

pub fn read_state_dump<R: Read>(mut r: R) -> Result<FockPair> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rd = Reader::new(&bytes);
    let n = rd.u64()? as usize;
    let t = rd.f64()?;
    let frame_alpha = C64::new(rd.f64()?, rd.f64()?);
    let mut read_vec = || -> Result<Vec<C64>> { (0..n).map(|_| rd.c64()).collect() };
    let psi_minus = read_vec()?;
    let psi_plus = read_vec()?;
    Ok(FockPair {
        psi_minus,
        psi_plus,
        frame_alpha,
        t,
    })
}
