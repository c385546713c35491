//! Scratch driver for eyeballing study behaviour during development.

use std::f64::consts::PI;
use std::time::Instant;

use gfm_core::scenario::{
    default_ks_grid, fault_study_config, fault_times, run_scenario, steady_window, sweep_base_config,
    sweep_ks, window_thd, ControllerKind, ScenarioConfig,
};
use gfm_core::types::{Phase, ThreePhase};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "fault".into());
    match which.as_str() {
        "fault" => fault(ControllerKind::Generalized),
        "fault-std" => fault(ControllerKind::Standard),
        "sweep" => sweep(),
        "statics" => statics(),
        "equiv" => equiv(),
        "trace" => trace(),
        "faultdbg" => faultdbg(),
        "trace-equiv" => trace_equiv(),
        "faultlate" => faultlate(),
        "equiv-hybrid" => equiv_hybrid(),
        "trace-sweep" => trace_sweep(),
        "stiffness" => stiffness(),
        "ringdown" => ringdown(),
        "freqresp" => freqresp(),
        "growth" => growth(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn stiffness() {
    // Per-phase synchronizing stiffness K[p][l] = dP_p/d(delta_l), measured on
    // the plant with an ideal switching-node cosine source and cycle-averaged
    // per-phase powers. Prints K, its symmetric/skew split, and the zero-sum
    // (differential-mode) eigenvalues that govern per-phase droop stability.
    use gfm_core::network::Plant;
    use num_complex::Complex64;
    let mut config = sweep_base_config();
    if std::env::var("PROBE_NOLOAD").is_ok() {
        config.plant.load = None;
    }
    let omega0 = config.droop.omega0;
    let base_delta = config.initial_delta;
    let eps = 1e-2;

    let run = |deltas: ThreePhase<f64>| -> ThreePhase<f64> {
        let mut plant = Plant::new(config.plant.clone()).unwrap();
        let conv = ThreePhase::from_fn(|ph| {
            Complex64::from_polar(1.0, deltas[ph] + ph.balanced_angle())
        });
        plant.init_steady_state(&conv, omega0).unwrap();
        let dt = config.plant.dt;
        let period = 2.0 * PI / omega0;
        let cycle = (period / dt).round() as usize;
        let settle = (0.5 / dt) as usize;
        let vsw = |t: f64| {
            ThreePhase::from_fn(|ph| (omega0 * t + deltas[ph] + ph.balanced_angle()).cos())
        };
        for k in 0..settle {
            let t = k as f64 * dt;
            plant.step(&vsw(t), t);
        }
        let mut acc = ThreePhase::uniform(0.0);
        for k in settle..settle + 2 * cycle {
            let t = k as f64 * dt;
            let m = plant.measure(&vsw(t), t);
            for ph in Phase::ALL {
                acc[ph] += m.v[ph] * m.i_o[ph];
            }
            plant.step(&vsw(t), t);
        }
        acc.map(|&s| s / (2 * cycle) as f64)
    };

    let p0 = run(ThreePhase::uniform(base_delta));
    println!("base P = ({:+.5}, {:+.5}, {:+.5})", p0.a, p0.b, p0.c);
    let mut k_mat = [[0.0_f64; 3]; 3];
    for (j, &lph) in Phase::ALL.iter().enumerate() {
        let d = ThreePhase::from_fn(|ph| base_delta + if ph == lph { eps } else { 0.0 });
        let p1 = run(d);
        for (i, &pph) in Phase::ALL.iter().enumerate() {
            k_mat[i][j] = (p1[pph] - p0[pph]) / eps;
        }
    }
    println!("K (rows P_p, cols delta_l):");
    for row in &k_mat {
        println!("  [{:+.4} {:+.4} {:+.4}]", row[0], row[1], row[2]);
    }
    // Zero-sum subspace basis.
    let u1 = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let u2 = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
    let mut m2 = [[0.0_f64; 2]; 2];
    for (r, ur) in [u1, u2].iter().enumerate() {
        for (c, uc) in [u1, u2].iter().enumerate() {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += ur[i] * k_mat[i][j] * uc[j];
                }
            }
            m2[r][c] = s;
        }
    }
    let tr = m2[0][0] + m2[1][1];
    let det = m2[0][0] * m2[1][1] - m2[0][1] * m2[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        println!("zero-sum eig: {:+.4}, {:+.4} (real)", 0.5 * (tr + r), 0.5 * (tr - r));
    } else {
        let re = 0.5 * tr;
        let im = 0.5 * (-disc).sqrt();
        let mag = (re * re + im * im).sqrt();
        let ang = im.atan2(re).to_degrees();
        println!(
            "zero-sum eig: {re:+.4} ± j{im:.4}  (|.|={mag:.4}, rotation {ang:+.2} deg)"
        );
        let mp = config.droop.m_p;
        let lam_re = -omega0 * mp * re;
        let lam_im = omega0 * mp * im;
        println!(
            "proportional droop poles (no lag): {lam_re:+.2} ± j{lam_im:.2} rad/s"
        );
    }
    let ucm = [1.0 / 3f64.sqrt(); 3];
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += ucm[i] * k_mat[i][j] * ucm[j];
        }
    }
    println!("common-mode stiffness: {s:+.4}");
}

fn ringdown() {
    // Natural modes of the plant alone: settle with an ideal cosine source,
    // kick phase a of v_sw for 1 ms, and FFT the difference of i_o against an
    // unkicked twin run. Peaks expose lightly damped network resonances.
    use gfm_core::network::Plant;
    use num_complex::Complex64;
    use rustfft::FftPlanner;
    let mut config = sweep_base_config();
    if std::env::var("PROBE_NOLOAD").is_ok() {
        config.plant.load = None;
    }
    let omega0 = config.droop.omega0;
    let delta = config.initial_delta;
    let dt = config.plant.dt;
    let conv = ThreePhase::from_fn(|ph| Complex64::from_polar(1.0, delta + ph.balanced_angle()));
    let mut kicked = Plant::new(config.plant.clone()).unwrap();
    let mut quiet = Plant::new(config.plant.clone()).unwrap();
    kicked.init_steady_state(&conv, omega0).unwrap();
    quiet.init_steady_state(&conv, omega0).unwrap();
    let vsw = |t: f64| ThreePhase::from_fn(|ph| (omega0 * t + delta + ph.balanced_angle()).cos());
    let settle = (0.3 / dt) as usize;
    for k in 0..settle {
        let t = k as f64 * dt;
        kicked.step(&vsw(t), t);
        quiet.step(&vsw(t), t);
    }
    let kick_len = (1e-3 / dt) as usize;
    let n = 1 << 16; // 65536 samples at 1e-5 s = 0.655 s record
    let mut diff = Vec::with_capacity(n);
    for k in 0..n {
        let t = (settle + k) as f64 * dt;
        let mut v = vsw(t);
        if k < kick_len {
            v.a += 0.05;
        }
        let mk = kicked.measure(&v, t);
        let mq = quiet.measure(&vsw(t), t);
        diff.push(mk.i_o.a - mq.i_o.a);
        kicked.step(&v, t);
        quiet.step(&vsw(t), t);
    }
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> =
        diff.iter().map(|&x| rustfft::num_complex::Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    println!("late-window rms: {:.3e}", {
        let tail = &diff[n / 2..];
        (tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64).sqrt()
    });
    println!("spectral peaks (f Hz, rad/s, |I|):");
    let mags: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let mut peaks: Vec<(usize, f64)> = (2..n / 2 - 1)
        .filter(|&i| mags[i] > mags[i - 1] && mags[i] > mags[i + 1])
        .map(|i| (i, mags[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    for (i, m) in peaks.iter().take(12) {
        let f = *i as f64 * df;
        println!("  {:8.2} Hz  {:8.1} rad/s  {:.3e}", f, 2.0 * PI * f, m);
    }
}

fn freqresp() {
    // Loop-transfer measurement for the per-phase droop path: freeze the
    // droop, modulate delta_a sinusoidally, and correlate the notched power
    // measurement of phase a against the modulation. The inner loops, the
    // quadrature chain, the one-tick delay, and the plant are all live, so
    // the measured T(jw) = P_a / delta_a is exactly what the frequency droop
    // closes its loop around.
    use gfm_core::control::{current_loop_step, limit_current, voltage_loop_step, LoopPi};
    use gfm_core::dsp::{
        phase_power, rotate_from_dq, rotate_to_dq, DelayLine, NotchFilter, PhasorDq, PiControl,
    };
    use gfm_core::network::Plant;
    use num_complex::Complex64;

    let mut config = sweep_base_config();
    if std::env::var("PROBE_NOLOAD").is_ok() {
        config.plant.load = None;
    }
    let inner = config.inner.clone();
    let dp = config.droop.clone();
    let omega0 = dp.omega0;
    let dt = config.control_dt;
    let period = 2.0 * PI / omega0;
    let span = 1.5 * period;
    let delta0 = config.initial_delta;
    let amp: f64 = std::env::var("PROBE_AMP")
        .map(|v| v.parse().unwrap())
        .unwrap_or(2e-3);

    let run_one = |w_m: f64| -> (Complex64, Complex64) {
        let mut lines: Vec<DelayLine> =
            (0..9).map(|_| DelayLine::with_span(span, dt)).collect();
        let mut notches: Vec<NotchFilter> =
            (0..6).map(|_| NotchFilter::new(2.0 * omega0, 2.0, dt).unwrap()).collect();
        let mut v_pi: Vec<LoopPi> = (0..3)
            .map(|_| LoopPi {
                d: PiControl::new(inner.v_gains.0, inner.v_gains.1),
                q: PiControl::new(inner.v_gains.0, inner.v_gains.1),
            })
            .collect();
        let mut i_pi: Vec<LoopPi> = (0..3)
            .map(|_| LoopPi {
                d: PiControl::new(inner.i_gains.0, inner.i_gains.1),
                q: PiControl::new(inner.i_gains.0, inner.i_gains.1),
            })
            .collect();

        let mut plant = Plant::new(config.plant.clone()).unwrap();
        let conv = ThreePhase::from_fn(|ph| {
            Complex64::from_polar(1.0, delta0 + ph.balanced_angle())
        });
        plant.init_steady_state(&conv, omega0).unwrap();

        // Commanded per-phase angle: frozen droop plus the phase-a probe.
        let delta_of = |ph: Phase, t: f64| -> f64 {
            let base = delta0 + omega0 * t;
            if ph == Phase::A {
                base + amp * (w_m * t).sin()
            } else {
                base
            }
        };

        let settle = 0.8;
        let n_per = ((6.0 * 2.0 * PI / w_m) / dt).ceil() as usize;
        let n_settle = (settle / dt).round() as usize;
        let ticks = n_settle + n_per;
        let substeps = (dt / config.plant.dt).round() as usize;
        let warm = (0.5 * period / dt).ceil() as usize;

        let mut pending =
            ThreePhase::from_fn(|ph| (delta_of(ph, 0.0) + ph.balanced_angle()).cos());
        let mut held = pending;
        let mut acc_p = Complex64::new(0.0, 0.0);
        let mut acc_q = Complex64::new(0.0, 0.0);
        let mut acc_d = Complex64::new(0.0, 0.0);
        let mut prev_delta = ThreePhase::from_fn(|ph| delta_of(ph, -dt));
        for k in 0..ticks {
            let t = k as f64 * dt;
            let meas = plant.measure(&held, t);
            for (ph_i, ph) in Phase::ALL.iter().enumerate() {
                lines[3 * ph_i].push(t, meas.v[*ph]);
                lines[3 * ph_i + 1].push(t, meas.i[*ph]);
                lines[3 * ph_i + 2].push(t, meas.i_o[*ph]);
            }
            let delta_now = ThreePhase::from_fn(|ph| delta_of(ph, t));
            let omega_now = ThreePhase::from_fn(|ph| (delta_now[ph] - prev_delta[ph]) / dt);
            prev_delta = delta_now;
            let out = if k < warm {
                ThreePhase::from_fn(|ph| (delta_now[ph] + ph.balanced_angle()).cos())
            } else {
                let mut v_sw = ThreePhase::uniform(0.0);
                for (ph_i, ph) in Phase::ALL.iter().enumerate() {
                    let theta = delta_now[*ph] + ph.balanced_angle();
                    let w = omega_now[*ph];
                    let vq = lines[3 * ph_i].quadrature(w, t).unwrap();
                    let iq = lines[3 * ph_i + 1].quadrature(w, t).unwrap();
                    let ioq = lines[3 * ph_i + 2].quadrature(w, t).unwrap();
                    let v_dq = rotate_to_dq(meas.v[*ph], vq, theta);
                    let i_dq = rotate_to_dq(meas.i[*ph], iq, theta);
                    let io_dq = rotate_to_dq(meas.i_o[*ph], ioq, theta);
                    let (p_raw, q_raw) = phase_power((meas.v[*ph], vq), (meas.i[*ph], iq));
                    let _ = notches[2 * ph_i].retune(2.0 * w);
                    let _ = notches[2 * ph_i + 1].retune(2.0 * w);
                    let p = notches[2 * ph_i].step(p_raw);
                    let q = notches[2 * ph_i + 1].step(q_raw);
                    if *ph == Phase::A && k >= n_settle {
                        let ph_ref = Complex64::from_polar(1.0, -w_m * t);
                        acc_p += p * ph_ref;
                        acc_q += q * ph_ref;
                        acc_d += (delta_now[*ph] - delta0 - omega0 * t) * ph_ref;
                    }
                    if *ph == Phase::A
                        && std::env::var("PROBE_DEBUG").is_ok()
                        && k % ((0.05 / dt) as usize) == 0
                    {
                        eprintln!("    t={t:+.3} p_a={p:+.6} q_a={q:+.6}");
                    }
                    let i_ref = voltage_loop_step(
                        v_dq,
                        PhasorDq::new(1.0, 0.0),
                        io_dq,
                        &mut v_pi[ph_i],
                        &inner,
                        dt,
                    );
                    let i_cmd = limit_current(i_ref, inner.i_max);
                    let v_sw_dq =
                        current_loop_step(i_dq, i_cmd, v_dq, &mut i_pi[ph_i], &inner, dt);
                    let theta_mid = theta + 0.5 * w * dt;
                    v_sw[*ph] = rotate_from_dq(v_sw_dq, theta_mid);
                }
                v_sw
            };
            held = pending;
            pending = out;
            for s in 0..substeps {
                plant.step(&held, t + s as f64 * config.plant.dt);
            }
        }
        let t_p = acc_p / acc_d;
        let t_q = acc_q / acc_d;
        (t_p, t_q)
    };

    let grid: Vec<f64> = match std::env::var("PROBE_WM") {
        Ok(v) => vec![v.parse().unwrap()],
        Err(_) => vec![5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 66.0, 80.0, 100.0, 130.0, 160.0, 200.0],
    };
    println!("  w_m     |T_p|   arg(T_p)   |T_q|   arg(T_q)   [needed |T| for jw pole: w/18.85 at -90deg]");
    for w_m in grid {
        let (tp, tq) = run_one(w_m);
        println!(
            "  {:6.1}  {:6.3}  {:+8.2}  {:6.3}  {:+8.2}",
            w_m,
            tp.norm(),
            tp.arg().to_degrees(),
            tq.norm(),
            tq.arg().to_degrees()
        );
    }
}

fn growth() {
    // Growth rate of the per-phase inner-chain instability: frozen droop
    // references, a one-tick seed kick on v_sw phase a at t = 0.5 s, then an
    // exponential fit to the envelope of the measured phase-a power
    // deviation. Negative rate = stable chain.
    use gfm_core::control::{current_loop_step, limit_current, voltage_loop_step, LoopPi};
    use gfm_core::dsp::{
        phase_power, rotate_from_dq, rotate_to_dq, DelayLine, NotchFilter, PhasorDq, PiControl,
    };
    use gfm_core::network::Plant;
    use num_complex::Complex64;

    let mut config = sweep_base_config();
    if std::env::var("PROBE_NOLOAD").is_ok() {
        config.plant.load = None;
    }
    if let Ok(v) = std::env::var("PROBE_VKP") {
        config.inner.v_gains.0 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_VKI") {
        config.inner.v_gains.1 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_IKP") {
        config.inner.i_gains.0 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_IKI") {
        config.inner.i_gains.1 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_RF") {
        let r: f64 = v.parse().unwrap();
        config.plant.filter_r = r;
        config.inner.r_f = r;
    }
    if let Ok(v) = std::env::var("PROBE_LF") {
        let x: f64 = v.parse().unwrap();
        config.plant.filter_x = x;
        config.inner.x_f = x;
    }
    if let Ok(v) = std::env::var("PROBE_XR") {
        config.plant.xfmr_r = v.parse().unwrap();
    }
    let inner = config.inner.clone();
    let omega0 = config.droop.omega0;
    let dt = config.control_dt;
    let period = 2.0 * PI / omega0;
    let span = 1.5 * period;
    let delta0 = config.initial_delta;
    let dur: f64 = std::env::var("PROBE_DUR").map(|v| v.parse().unwrap()).unwrap_or(3.0);

    let mut lines: Vec<DelayLine> = (0..9).map(|_| DelayLine::with_span(span, dt)).collect();
    let mut notches: Vec<NotchFilter> =
        (0..6).map(|_| NotchFilter::new(2.0 * omega0, 2.0, dt).unwrap()).collect();
    let mut v_pi: Vec<LoopPi> = (0..3)
        .map(|_| LoopPi {
            d: PiControl::new(inner.v_gains.0, inner.v_gains.1),
            q: PiControl::new(inner.v_gains.0, inner.v_gains.1),
        })
        .collect();
    let mut i_pi: Vec<LoopPi> = (0..3)
        .map(|_| LoopPi {
            d: PiControl::new(inner.i_gains.0, inner.i_gains.1),
            q: PiControl::new(inner.i_gains.0, inner.i_gains.1),
        })
        .collect();
    let mut plant = Plant::new(config.plant.clone()).unwrap();
    let conv =
        ThreePhase::from_fn(|ph| Complex64::from_polar(1.0, delta0 + ph.balanced_angle()));
    plant.init_steady_state(&conv, omega0).unwrap();

    let ticks = (dur / dt).round() as usize;
    let substeps = (dt / config.plant.dt).round() as usize;
    let warm = (0.5 * period / dt).ceil() as usize;
    let kick_tick = (0.5 / dt) as usize;
    let mut pending = ThreePhase::from_fn(|ph| (delta0 + ph.balanced_angle()).cos());
    let mut held = pending;
    let mut p_hist: Vec<f64> = Vec::with_capacity(ticks);

    // Optionally drive the production controller (droop channels frozen via
    // tiny gains) instead of the hand-rolled replica of its inner chain.
    let real = std::env::var("PROBE_REAL").is_ok();
    let mut real_ctrl = if real {
        let mut dp = config.droop.clone();
        dp.m_p = 1e-12;
        dp.m_q = 1e-12;
        dp.k_s = 0.0;
        Some(
            gfm_core::control::GeneralizedController::new(
                dp,
                inner.clone(),
                dt,
                ThreePhase::uniform(delta0),
            )
            .unwrap(),
        )
    } else {
        None
    };

    for k in 0..ticks {
        let t = k as f64 * dt;
        let meas = plant.measure(&held, t);
        let out = if let Some(ctrl) = real_ctrl.as_mut() {
            let outs = ctrl.step(&meas, t);
            p_hist.push(outs.diag.p.a);
            held = outs.v_sw;
            // The production controller manages its own one-tick delay, so
            // bypass the replica's pending swap entirely.
            pending = outs.v_sw;
            if k == kick_tick {
                held.a += 0.02;
            }
            for s in 0..substeps {
                plant.step(&held, t + s as f64 * config.plant.dt);
            }
            continue;
        } else {
            for (ph_i, ph) in Phase::ALL.iter().enumerate() {
                lines[3 * ph_i].push(t, meas.v[*ph]);
                lines[3 * ph_i + 1].push(t, meas.i[*ph]);
                lines[3 * ph_i + 2].push(t, meas.i_o[*ph]);
            }
            let theta_of = |ph: Phase| delta0 + omega0 * t + ph.balanced_angle();
            if k < warm {
                ThreePhase::from_fn(|ph| theta_of(ph).cos())
            } else {
                let mut v_sw = ThreePhase::uniform(0.0);
                for (ph_i, ph) in Phase::ALL.iter().enumerate() {
                    let theta = theta_of(*ph);
                    let vq = lines[3 * ph_i].quadrature(omega0, t).unwrap();
                    let iq = lines[3 * ph_i + 1].quadrature(omega0, t).unwrap();
                    let ioq = lines[3 * ph_i + 2].quadrature(omega0, t).unwrap();
                    let v_dq = rotate_to_dq(meas.v[*ph], vq, theta);
                    let i_dq = rotate_to_dq(meas.i[*ph], iq, theta);
                    let io_dq = rotate_to_dq(meas.i_o[*ph], ioq, theta);
                    let (p_raw, _q_raw) = phase_power((meas.v[*ph], vq), (meas.i[*ph], iq));
                    let p = notches[2 * ph_i].step(p_raw);
                    if *ph == Phase::A {
                        p_hist.push(p);
                    }
                    let i_ref = voltage_loop_step(
                        v_dq,
                        PhasorDq::new(1.0, 0.0),
                        io_dq,
                        &mut v_pi[ph_i],
                        &inner,
                        dt,
                    );
                    let i_cmd = limit_current(i_ref, inner.i_max);
                    let v_sw_dq =
                        current_loop_step(i_dq, i_cmd, v_dq, &mut i_pi[ph_i], &inner, dt);
                    let theta_mid = theta + 0.5 * omega0 * dt;
                    v_sw[*ph] = rotate_from_dq(v_sw_dq, theta_mid);
                }
                v_sw
            }
        };
        held = pending;
        pending = out;
        if k == kick_tick {
            held.a += 0.02;
        }
        for s in 0..substeps {
            plant.step(&held, t + s as f64 * config.plant.dt);
        }
    }
    // Envelope diagnostic: per-10ms window, max |p - late-run-free mean|.
    // Use the pre-kick final value as the reference operating point.
    let p_ref = p_hist[kick_tick - 10];
    let win = (0.01 / dt) as usize;
    let start = kick_tick + win;
    let mut env: Vec<(f64, f64)> = Vec::new();
    let mut k = start;
    while k + win <= p_hist.len() {
        let amp = p_hist[k..k + win].iter().map(|p| (p - p_ref).abs()).fold(0.0, f64::max);
        env.push((k as f64 * dt, amp));
        k += win;
    }
    // Fit ln(amp) over the decade 3e-4..3e-2 (post-kick ring, pre-saturation).
    let pts: Vec<(f64, f64)> = env
        .iter()
        .filter(|(_, a)| *a > 3e-4 && *a < 3e-2)
        .map(|&(t, a)| (t, a.ln()))
        .collect();
    if pts.len() >= 4 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        println!("growth rate: {slope:+.2} /s over {} windows", pts.len());
    } else {
        println!("growth rate: too few points in fit band");
    }
    for (t, a) in env.iter().step_by(10) {
        println!("  t={t:.2} amp={a:.3e}");
    }
    let last = env.last().unwrap();
    println!("  final t={:.2} amp={:.3e}", last.0, last.1);
    if std::env::var("PROBE_RAW").is_ok() {
        let every = (0.02 / dt) as usize;
        for (k, p) in p_hist.iter().enumerate().step_by(every) {
            eprintln!("  raw t={:.3} p_a={p:+.5}", k as f64 * dt);
        }
    }
}

fn trace_sweep() {
    let mut config = sweep_base_config();
    config.droop.k_s = std::env::var("PROBE_KS").map(|d| d.parse().unwrap()).unwrap_or(0.0);
    config.duration = std::env::var("PROBE_DUR").map(|d| d.parse().unwrap()).unwrap_or(2.0);
    if std::env::var("PROBE_NOLOAD").is_ok() {
        config.plant.load = None;
    }
    if std::env::var("PROBE_BALLOAD").is_ok() {
        if let Some(load) = config.plant.load.as_mut() {
            let r = load.r.a;
            let x = load.x.a;
            load.r = ThreePhase::uniform(r);
            load.x = ThreePhase::uniform(x);
        }
    }
    if let Ok(v) = std::env::var("PROBE_MP") {
        config.droop.m_p = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_MQ") {
        config.droop.m_q = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_TAU") {
        config.droop.tau = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_VKP") {
        config.inner.v_gains.0 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_VKI") {
        config.inner.v_gains.1 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_IKP") {
        config.inner.i_gains.0 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROBE_IKI") {
        config.inner.i_gains.1 = v.parse().unwrap();
    }
    let record = run_scenario(&config).unwrap();
    let interval: f64 = std::env::var("PROBE_INTERVAL")
        .map(|d| d.parse().unwrap())
        .unwrap_or(0.1);
    let every = (interval / config.control_dt) as usize;
    for (k, row) in record.rows.iter().enumerate() {
        if k % every != 0 || k == 0 {
            continue;
        }
        let lim_recent = record.rows[k - every..k]
            .iter()
            .filter(|r| r.limiter.a || r.limiter.b || r.limiter.c)
            .count();
        println!(
            "t={:+.4} P=({:+.4},{:+.4},{:+.4}) Q=({:+.4},{:+.4},{:+.4}) Vmag=({:.3},{:.3},{:.3}) Imag=({:.3},{:.3},{:.3}) w=({:+.2e},{:+.2e},{:+.2e}) lim={}",
            row.t,
            row.p.a, row.p.b, row.p.c,
            row.q.a, row.q.b, row.q.c,
            row.v_mag.a, row.v_mag.b, row.v_mag.c,
            row.i_mag.a, row.i_mag.b, row.i_mag.c,
            row.omega.a / config.droop.omega0 - 1.0,
            row.omega.b / config.droop.omega0 - 1.0,
            row.omega.c / config.droop.omega0 - 1.0,
            lim_recent
        );
    }
    let last_half = (0.5 / config.control_dt) as usize;
    let tail = &record.rows[record.rows.len().saturating_sub(last_half)..];
    let w_max = tail
        .iter()
        .flat_map(|r| Phase::ALL.iter().map(|&ph| (r.omega[ph] / config.droop.omega0 - 1.0).abs()))
        .fold(0.0_f64, f64::max);
    let lim_total = tail
        .iter()
        .filter(|r| r.limiter.a || r.limiter.b || r.limiter.c)
        .count();
    println!("SUMMARY tail0.5s: max|w dev|={w_max:.3e} lim_ticks={lim_total}");
}

/// Standard-structure controller whose measurements are passed through the
/// quarter-period vector pair-average `(Z(t) + j Z(t - T/4)) / 2` before the
/// loops, isolating the effect of the measurement envelope lag.
fn equiv_hybrid() {
    use gfm_core::control::{clarke, current_loop_step, limit_current, voltage_loop_step, LoopPi};
    use gfm_core::dsp::{
        rotate_from_dq, rotate_to_dq, DelayLine, NotchFilter, PhasorDq, PiControl,
    };
    use gfm_core::network::Plant;
    use num_complex::Complex64;

    let mut config = ScenarioConfig::default();
    config.droop.k_s = 1e5;
    config.droop.p_star = ThreePhase::uniform(0.3);
    config.droop.q_star = ThreePhase::uniform(0.1);
    config.duration = std::env::var("PROBE_DUR").map(|d| d.parse().unwrap()).unwrap_or(1.0);

    let dp = config.droop.clone();
    let inner = config.inner.clone();
    let dt = config.control_dt;
    let omega0 = dp.omega0;
    let period = 2.0 * PI / omega0;
    let span = 1.5 * period;
    let mut lines: Vec<DelayLine> = (0..6).map(|_| DelayLine::with_span(span, dt)).collect();
    let mut notch_p = NotchFilter::new(2.0 * omega0, 2.0, dt).unwrap();
    let mut notch_q = NotchFilter::new(2.0 * omega0, 2.0, dt).unwrap();
    let mut v_pi = LoopPi {
        d: PiControl::new(inner.v_gains.0, inner.v_gains.1),
        q: PiControl::new(inner.v_gains.0, inner.v_gains.1),
    };
    let mut i_pi = LoopPi {
        d: PiControl::new(inner.i_gains.0, inner.i_gains.1),
        q: PiControl::new(inner.i_gains.0, inner.i_gains.1),
    };
    let mut delta = config.initial_delta;
    let mut v_delta = 0.0_f64;
    let mut omega = omega0;
    let v_star = dp.v_star.mean();
    let p_star = dp.p_star.mean();
    let q_star = dp.q_star.mean();
    let mut pending = ThreePhase::from_fn(|ph| v_star * (delta + ph.balanced_angle()).cos());
    let mut warmup = (0.5 * PI / omega0 / dt).ceil() as usize;

    let mut plant = Plant::new(config.plant.clone()).unwrap();
    let conv = ThreePhase::from_fn(|ph| {
        Complex64::from_polar(dp.v_star[ph], config.initial_delta + ph.balanced_angle())
    });
    plant.init_steady_state(&conv, omega0).unwrap();

    let ticks = (config.duration / dt).round() as usize;
    let substeps = (dt / config.plant.dt).round() as usize;
    let mut held = pending;
    let mut lim_count = 0usize;
    let mut p_now = 0.0;
    let mut q_now = 0.0;
    for k in 0..ticks {
        let t = k as f64 * dt;
        let meas = plant.measure(&held, t);
        let (v_al, v_be) = clarke(&meas.v);
        let (i_al, i_be) = clarke(&meas.i);
        let (io_al, io_be) = clarke(&meas.i_o);
        for (line, x) in lines.iter_mut().zip([v_al, v_be, i_al, i_be, io_al, io_be]) {
            line.push(t, x);
        }
        let out = if warmup > 0 {
            warmup -= 1;
            delta += omega0 * dt;
            omega = omega0;
            ThreePhase::from_fn(|ph| v_star * (delta + ph.balanced_angle()).cos())
        } else {
            let back: Vec<f64> = lines.iter().map(|l| l.quadrature(omega, t).unwrap()).collect();
            // (Z + j Z4) / 2 with Z = al + j be: re = (al - be4)/2, im = (be + al4)/2.
            let bar = |al: f64, be: f64, al4: f64, be4: f64| (0.5 * (al - be4), 0.5 * (be + al4));
            let (vd_al, vd_be) = bar(v_al, v_be, back[0], back[1]);
            let (id_al, id_be) = bar(i_al, i_be, back[2], back[3]);
            let (iod_al, iod_be) = bar(io_al, io_be, back[4], back[5]);
            let v_dq = rotate_to_dq(vd_al, vd_be, delta);
            let i_dq = rotate_to_dq(id_al, id_be, delta);
            let io_dq = rotate_to_dq(iod_al, iod_be, delta);
            let p_raw = 0.5 * (v_dq.d * i_dq.d + v_dq.q * i_dq.q);
            let q_raw = 0.5 * (v_dq.q * i_dq.d - v_dq.d * i_dq.q);
            let _ = notch_p.retune(2.0 * omega);
            let _ = notch_q.retune(2.0 * omega);
            let p = notch_p.step(p_raw);
            let q = notch_q.step(q_raw);
            p_now = p;
            q_now = q;
            let prev = delta;
            delta += dt * omega0 * (1.0 + dp.m_p * (p_star - p));
            omega = (delta - prev) / dt;
            let decay = (-dt / dp.tau).exp();
            v_delta = decay * v_delta + (1.0 - decay) * dp.m_q * (q_star - q);
            v_delta = v_delta.max(-v_star);
            let v_gfm = v_star + v_delta;
            let i_ref = voltage_loop_step(v_dq, PhasorDq::new(v_gfm, 0.0), io_dq, &mut v_pi, &inner, dt);
            if i_ref.magnitude() > inner.i_max {
                lim_count += 1;
            }
            let i_cmd = limit_current(i_ref, inner.i_max);
            let v_sw_dq = current_loop_step(i_dq, i_cmd, v_dq, &mut i_pi, &inner, dt);
            let theta_mid = delta + 0.5 * omega * dt;
            ThreePhase::from_fn(|ph| rotate_from_dq(v_sw_dq, theta_mid + ph.balanced_angle()))
        };
        held = pending;
        pending = out;
        if k % ((0.02 / dt) as usize) == 0 && k > 0 {
            println!(
                "t={:+.3} p={:+.4} q={:+.4} w={:+.3e} lim={}",
                t,
                p_now,
                q_now,
                omega / omega0 - 1.0,
                lim_count
            );
            lim_count = 0;
        }
        for s in 0..substeps {
            plant.step(&held, t + s as f64 * config.plant.dt);
        }
    }
}

fn fault(kind: ControllerKind) {
    let mut config = fault_study_config(kind);
    if let Ok(ki) = std::env::var("PROBE_KI_I") {
        config.inner.i_gains.1 = ki.parse().unwrap();
    }
    if let Ok(kp) = std::env::var("PROBE_KP_I") {
        config.inner.i_gains.0 = kp.parse().unwrap();
    }
    if let Ok(lim) = std::env::var("PROBE_INT_LIM") {
        config.inner.integrator_limit = Some(lim.parse().unwrap());
    }
    let start = Instant::now();
    let record = run_scenario(&config).unwrap();
    println!("kind={kind:?} wall={:?} aborted={:?}", start.elapsed(), record.aborted);
    let (on, off) = fault_times(&config).unwrap();
    let cycle = 2.0 * PI / config.droop.omega0;

    let pre = steady_window(&record, record.index_at(on) - 1, 3).unwrap();
    println!(
        "pre-fault: Vuf={:.5} P=({:.4},{:.4},{:.4}) Q=({:.4},{:.4},{:.4})",
        pre.report.v_uf, pre.p.a, pre.p.b, pre.p.c, pre.q.a, pre.q.b, pre.q.c
    );

    let rows = record.between(on + cycle, off);
    let mut imax = ThreePhase::uniform(0.0_f64);
    let mut vmin = ThreePhase::uniform(f64::INFINITY);
    let mut lim_ticks = ThreePhase::uniform(0usize);
    for r in rows {
        for ph in Phase::ALL {
            imax[ph] = imax[ph].max(r.i_mag[ph]);
            vmin[ph] = vmin[ph].min(r.v_mag[ph]);
            lim_ticks[ph] += r.limiter[ph] as usize;
        }
    }
    println!(
        "fault window: imax=({:.4},{:.4},{:.4}) vmin=({:.4},{:.4},{:.4}) lim_ticks=({},{},{})",
        imax.a, imax.b, imax.c, vmin.a, vmin.b, vmin.c, lim_ticks.a, lim_ticks.b, lim_ticks.c
    );

    let fault_end = record.index_at(off) - 1;
    let thd_fault = window_thd(&record, fault_end, 3, 50).unwrap();
    println!(
        "fault THD (last 3 cycles before clear): ({:.4},{:.4},{:.4})",
        thd_fault.a, thd_fault.b, thd_fault.c
    );

    for dt in [0.1, 0.25, 0.5, 1.0] {
        let sw = steady_window(&record, record.index_at(off + dt), 3).unwrap();
        println!(
            "post-clear +{dt:.2}s: Vuf={:.5} Vmag+={:.4} P=({:.4},{:.4},{:.4}) w=({:.4},{:.4},{:.4})",
            sw.report.v_uf,
            sw.report.v_positive,
            sw.p.a,
            sw.p.b,
            sw.p.c,
            sw.omega.a / config.droop.omega0,
            sw.omega.b / config.droop.omega0,
            sw.omega.c / config.droop.omega0,
        );
    }
    let last_lim = record.rows.last().unwrap().limiter;
    println!("final limiter flags: {:?}", last_lim);
}

fn trace() {
    let mut config = fault_study_config(ControllerKind::Generalized);
    if let Ok(ki) = std::env::var("PROBE_KI_I") {
        config.inner.i_gains.1 = ki.parse().unwrap();
    }
    if let Ok(kp) = std::env::var("PROBE_KP_I") {
        config.inner.i_gains.0 = kp.parse().unwrap();
    }
    if let Ok(lim) = std::env::var("PROBE_INT_LIM") {
        config.inner.integrator_limit = Some(lim.parse().unwrap());
    }
    let record = run_scenario(&config).unwrap();
    let every = (0.1 / config.control_dt) as usize;
    for (k, row) in record.rows.iter().enumerate() {
        if k % every != 0 || k == 0 {
            continue;
        }
        let lim_recent = record.rows[k - every..k]
            .iter()
            .filter(|r| r.limiter.a || r.limiter.b || r.limiter.c)
            .count();
        println!(
            "t={:+.2} P=({:+.3},{:+.3},{:+.3}) Q=({:+.3},{:+.3},{:+.3}) Vmag=({:.3},{:.3},{:.3}) Imag=({:.3},{:.3},{:.3}) w={:.4} lim={}",
            row.t,
            row.p.a, row.p.b, row.p.c,
            row.q.a, row.q.b, row.q.c,
            row.v_mag.a, row.v_mag.b, row.v_mag.c,
            row.i_mag.a, row.i_mag.b, row.i_mag.c,
            row.omega.mean() / config.droop.omega0,
            lim_recent
        );
    }
}

fn sweep() {
    let base = sweep_base_config();
    let start = Instant::now();
    let rows = sweep_ks(&base, &default_ks_grid()).unwrap();
    println!("sweep wall={:?}", start.elapsed());
    for r in rows {
        println!(
            "ks={:<9.1e} Vuf={:.6} Puf={:.6} Quf={:.6} P=({:+.5},{:+.5},{:+.5}) Q=({:+.5},{:+.5},{:+.5}) dur={} conv={}",
            r.k_s,
            r.report.v_uf,
            r.report.p_uf,
            r.report.q_uf,
            r.p.a,
            r.p.b,
            r.p.c,
            r.q.a,
            r.q.b,
            r.q.c,
            r.duration,
            r.converged
        );
    }
}

fn statics() {
    for p_star in [0.0, 0.25, 0.5] {
        let mut config = ScenarioConfig::default();
        config.plant.scr = 1000.0;
        config.plant.grid_x_over_r = 20.0;
        config.plant.grid_omega = config.droop.omega0 * 1.001;
        config.droop.p_star = ThreePhase::uniform(p_star);
        config.duration = 2.0;
        let record = run_scenario(&config).unwrap();
        let sw = steady_window(&record, record.rows.len() - 1, 3).unwrap();
        let p_mean = sw.p.mean();
        let w_mean = sw.omega.mean();
        let dev = (w_mean - config.droop.omega0) / config.droop.omega0;
        let line = config.droop.m_p * (p_star - p_mean);
        println!(
            "P*={p_star:.2} P={p_mean:+.5} dw={dev:+.6e} m_p(P*-P)={line:+.6e} gap={:.2e}",
            (dev - line).abs()
        );
    }
}

fn equiv() {
    let mut results = Vec::new();
    for kind in [ControllerKind::Generalized, ControllerKind::Standard] {
        let mut config = ScenarioConfig::default();
        config.controller = kind;
        config.droop.k_s = 1e5;
        config.droop.p_star = ThreePhase::uniform(0.3);
        config.droop.q_star = ThreePhase::uniform(0.1);
        config.duration = 2.0;
        if let Ok(ki) = std::env::var("PROBE_KI_I") {
            config.inner.i_gains.1 = ki.parse().unwrap();
        }
        if let Ok(kp) = std::env::var("PROBE_KP_I") {
            config.inner.i_gains.0 = kp.parse().unwrap();
        }
        if let Ok(d) = std::env::var("PROBE_DUR") {
            config.duration = d.parse().unwrap();
        }
        let record = run_scenario(&config).unwrap();
        let sw = steady_window(&record, record.rows.len() - 1, 3).unwrap();
        let seq = gfm_core::analysis::sequence_components(&sw.v_phasors);
        println!(
            "{kind:?}: Pbar={:+.6} Qbar={:+.6} V+={:.6} w={:+.6e}",
            sw.p.mean(),
            sw.q.mean(),
            seq.positive.norm(),
            sw.omega.mean() / config.droop.omega0 - 1.0
        );
        results.push((sw.p.mean(), sw.q.mean(), seq.positive.norm(), sw.omega.mean()));
    }
    let (g, s) = (results[0], results[1]);
    println!(
        "gaps: P={:.2e} Q={:.2e} V+={:.2e} w={:.2e}",
        (g.0 - s.0).abs(),
        (g.1 - s.1).abs(),
        (g.2 - s.2).abs(),
        ((g.3 - s.3) / (2.0 * PI * 60.0)).abs()
    );
}

fn faultdbg() {
    use gfm_core::analysis::{cycle_samples, fundamental_phasor};
    use gfm_core::control::Controller;
    use gfm_core::network::Plant;

    let mut config = fault_study_config(ControllerKind::Generalized);
    if let Ok(ki) = std::env::var("PROBE_KI_I") {
        config.inner.i_gains.1 = ki.parse().unwrap();
    }
    if let Ok(kp) = std::env::var("PROBE_KP_I") {
        config.inner.i_gains.0 = kp.parse().unwrap();
    }
    let mut plant = Plant::new(config.plant.clone()).unwrap();
    let mut controller = match gfm_core::control::GeneralizedController::new(
        config.droop.clone(),
        config.inner.clone(),
        config.control_dt,
        ThreePhase::uniform(config.initial_delta),
    ) {
        Ok(c) => Controller::Generalized(Box::new(c)),
        Err(e) => panic!("{e}"),
    };
    let dt_c = config.control_dt;
    let dt_p = config.plant.dt;
    let ticks = config.ticks();
    let substeps = config.substeps();
    let window = cycle_samples(config.droop.omega0, dt_c, 1);
    let (on, off) = fault_times(&config).unwrap();
    let cycle = 2.0 * PI / config.droop.omega0;
    let k_on = (on / dt_c).round() as usize;
    let k_off = (off / dt_c).round() as usize;
    let k_guard = ((on + cycle) / dt_c).round() as usize;
    let k_guard2 = ((on + 2.0 * cycle) / dt_c).round() as usize;

    let mut held = ThreePhase::uniform(0.0);
    let mut hist: Vec<ThreePhase<f64>> = Vec::new();
    let mut scratch = vec![0.0; window];
    let mut max_rec = ThreePhase::uniform(0.0_f64);
    let mut max_rec2 = ThreePhase::uniform(0.0_f64);
    let mut t_rec2 = ThreePhase::uniform(0.0_f64);
    let mut max_diag = ThreePhase::uniform(0.0_f64);
    let mut max_ref = ThreePhase::uniform(0.0_f64);
    let mut t_rec = ThreePhase::uniform(0.0_f64);
    let mut t_diag = ThreePhase::uniform(0.0_f64);

    for k in 0..=ticks {
        let t = k as f64 * dt_c;
        if k == k_on {
            plant.apply(gfm_core::network::PlantEvent::FaultOn).unwrap();
        }
        if k == k_off {
            plant.apply(gfm_core::network::PlantEvent::FaultClear).unwrap();
        }
        let meas = plant.measure(&held, t);
        hist.push(meas.i);
        let diag = if k < ticks {
            let out = controller.step(&meas, t);
            held = out.v_sw;
            Some(out.diag)
        } else {
            None
        };
        if k + 1 >= window && k >= k_guard && k <= k_off {
            for ph in Phase::ALL {
                for (slot, row) in scratch.iter_mut().zip(&hist[hist.len() - window..]) {
                    *slot = row[ph];
                }
                let mag = fundamental_phasor(&scratch, config.droop.omega0, dt_c)
                    .unwrap()
                    .norm();
                if mag > max_rec[ph] {
                    max_rec[ph] = mag;
                    t_rec[ph] = t;
                }
                if k >= k_guard2 && mag > max_rec2[ph] {
                    max_rec2[ph] = mag;
                    t_rec2[ph] = t;
                }
                if let Some(d) = diag {
                    if d.i_mag[ph] > max_diag[ph] {
                        max_diag[ph] = d.i_mag[ph];
                        t_diag[ph] = t;
                    }
                    max_ref[ph] = max_ref[ph].max(d.i_ref_mag[ph]);
                }
            }
        }
        if k < ticks {
            for s in 0..substeps {
                plant.step(&held, t + s as f64 * dt_p);
            }
        }
    }
    println!("window fundamental cycle-max: ({:.4},{:.4},{:.4}) at t=({:.4},{:.4},{:.4})",
        max_rec.a, max_rec.b, max_rec.c, t_rec.a, t_rec.b, t_rec.c);
    println!("same, windows fully post-guard: ({:.4},{:.4},{:.4}) at t=({:.4},{:.4},{:.4})",
        max_rec2.a, max_rec2.b, max_rec2.c, t_rec2.a, t_rec2.b, t_rec2.c);
    println!("controller |i_dq| cycle-max:  ({:.4},{:.4},{:.4}) at t=({:.4},{:.4},{:.4})",
        max_diag.a, max_diag.b, max_diag.c, t_diag.a, t_diag.b, t_diag.c);
    println!("unlimited |i_ref| max:        ({:.4},{:.4},{:.4})", max_ref.a, max_ref.b, max_ref.c);
}

fn faultlate() {
    use gfm_core::analysis::{cycle_samples, fundamental_phasor};
    use gfm_core::control::Controller;
    use gfm_core::network::Plant;

    let mut config = fault_study_config(ControllerKind::Generalized);
    if let Ok(ki) = std::env::var("PROBE_KI_I") {
        config.inner.i_gains.1 = ki.parse().unwrap();
    }
    if let Ok(kp) = std::env::var("PROBE_KP_I") {
        config.inner.i_gains.0 = kp.parse().unwrap();
    }
    let mut plant = Plant::new(config.plant.clone()).unwrap();
    let mut controller = Controller::Generalized(Box::new(
        gfm_core::control::GeneralizedController::new(
            config.droop.clone(),
            config.inner.clone(),
            config.control_dt,
            ThreePhase::uniform(config.initial_delta),
        )
        .unwrap(),
    ));
    let dt_c = config.control_dt;
    let dt_p = config.plant.dt;
    let ticks = config.ticks();
    let substeps = config.substeps();
    let window = cycle_samples(config.droop.omega0, dt_c, 1);
    let (on, off) = fault_times(&config).unwrap();
    let cycle = 2.0 * PI / config.droop.omega0;
    let k_on = (on / dt_c).round() as usize;
    let k_off = (off / dt_c).round() as usize;
    let k_from = ((off - 2.0 * cycle) / dt_c).round() as usize;

    let mut held = ThreePhase::uniform(0.0);
    let mut hist: Vec<ThreePhase<f64>> = Vec::new();
    let mut scratch = vec![0.0; window];
    for k in 0..=ticks {
        let t = k as f64 * dt_c;
        if k == k_on {
            plant.apply(gfm_core::network::PlantEvent::FaultOn).unwrap();
        }
        if k == k_off {
            plant.apply(gfm_core::network::PlantEvent::FaultClear).unwrap();
        }
        let meas = plant.measure(&held, t);
        hist.push(meas.i);
        let diag = if k < ticks {
            let out = controller.step(&meas, t);
            held = out.v_sw;
            Some(out.diag)
        } else {
            None
        };
        if k >= k_from && k <= k_off {
            if k % 10 == 0 {
                let d = diag.unwrap();
                for (slot, row) in scratch.iter_mut().zip(&hist[hist.len() - window..]) {
                    *slot = row.a;
                }
                let wmag = fundamental_phasor(&scratch, config.droop.omega0, dt_c)
                    .unwrap()
                    .norm();
                println!(
                    "t={:.4} lim_a={} iref_a={:.4} idq_a={:.4} win_a={:.4} w_a={:.5} p_a={:+.4}",
                    t, d.limiter.a as u8, d.i_ref_mag.a, d.i_mag.a, wmag, d.omega.a / config.droop.omega0, d.p.a
                );
            }
        }
        if k < ticks {
            for s in 0..substeps {
                plant.step(&held, t + s as f64 * dt_p);
            }
        }
    }
}


fn trace_equiv() {
    let kind = match std::env::var("PROBE_STD").is_ok() {
        true => ControllerKind::Standard,
        false => ControllerKind::Generalized,
    };
    let mut config = ScenarioConfig::default();
    config.controller = kind;
    config.droop.k_s = 1e5;
    config.droop.p_star = ThreePhase::uniform(0.3);
    config.droop.q_star = ThreePhase::uniform(0.1);
    config.duration = std::env::var("PROBE_DUR").map(|d| d.parse().unwrap()).unwrap_or(4.0);
    if let Ok(kp) = std::env::var("PROBE_KP_I") {
        config.inner.i_gains.0 = kp.parse().unwrap();
    }
    let record = run_scenario(&config).unwrap();
    let interval: f64 = std::env::var("PROBE_INTERVAL")
        .map(|d| d.parse().unwrap())
        .unwrap_or(0.2);
    let every = (interval / config.control_dt) as usize;
    for (k, row) in record.rows.iter().enumerate() {
        if k % every != 0 || k == 0 {
            continue;
        }
        let lim_recent = record.rows[k - every..k]
            .iter()
            .filter(|r| r.limiter.a || r.limiter.b || r.limiter.c)
            .count();
        println!(
            "t={:+.4} P=({:+.3},{:+.3},{:+.3}) Q=({:+.3},{:+.3},{:+.3}) Vmag=({:.3},{:.3},{:.3}) Imag=({:.3},{:.3},{:.3}) w={:+.2e} lim={}",
            row.t,
            row.p.a, row.p.b, row.p.c,
            row.q.a, row.q.b, row.q.c,
            row.v_mag.a, row.v_mag.b, row.v_mag.c,
            row.i_mag.a, row.i_mag.b, row.i_mag.c,
            row.omega.mean() / config.droop.omega0 - 1.0,
            lim_recent
        );
    }
}
