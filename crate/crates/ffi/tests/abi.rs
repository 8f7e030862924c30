use std::ffi::{CStr, CString};
use std::ptr;

use semple_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(semple_last_error_message()) }.to_str().unwrap().to_string()
}

fn task(name: &str) -> *mut SempleTask {
    let name = CString::new(name).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { semple_task_new(name.as_ptr(), &mut t) }, SempleStatus::Ok);
    t
}

#[test]
fn param_counts() {
    assert_eq!(semple_param_count(30, 2, 2, 0), 449);
    assert_eq!(semple_param_count(40, 10, 2, 1), 1479);
    assert_eq!(semple_param_count(20, 51, 3, 0), 30799);
    assert_eq!(semple_param_count(0, 2, 2, 0), 0);
}

#[test]
fn task_round_trip() {
    let t = task("two_moons");
    let (mut l, mut d) = (0, 0);
    unsafe {
        assert_eq!(semple_task_dims(t, &mut l, &mut d), SempleStatus::Ok);
        assert_eq!((l, d), (2, 2));

        let mut prior = vec![0.0; 20];
        assert_eq!(semple_task_sample_prior(t, 10, 3, prior.as_mut_ptr(), prior.len()), SempleStatus::Ok);
        assert!(prior.iter().all(|v| v.abs() < 1.0));

        let theta = [0.0, 0.0];
        let mut ys = vec![0.0; 6];
        assert_eq!(semple_task_simulate(t, theta.as_ptr(), 2, 3, 1, ys.as_mut_ptr(), 6), SempleStatus::Ok);
        let mut again = vec![0.0; 6];
        semple_task_simulate(t, theta.as_ptr(), 2, 3, 1, again.as_mut_ptr(), 6);
        assert_eq!(ys, again);

        let mut ll = 0.0;
        assert_eq!(semple_task_loglik(t, ys.as_ptr(), 2, theta.as_ptr(), 2, &mut ll), SempleStatus::Ok);
        assert!(ll.is_finite());

        let mut small = vec![0.0; 5];
        assert_eq!(
            semple_task_simulate(t, theta.as_ptr(), 2, 3, 1, small.as_mut_ptr(), 5),
            SempleStatus::BufferTooSmall
        );
        assert_eq!(
            semple_task_simulate(t, theta.as_ptr(), 3, 3, 1, ys.as_mut_ptr(), 6),
            SempleStatus::DimensionMismatch
        );
        semple_task_free(t);
    }
}

#[test]
fn error_codes() {
    let mut t = ptr::null_mut();
    unsafe {
        let name = CString::new("missing").unwrap();
        assert_eq!(semple_task_new(name.as_ptr(), &mut t), SempleStatus::UnknownTask);
        assert!(last_error().contains("missing"));
        assert_eq!(semple_task_new(ptr::null(), &mut t), SempleStatus::NullPointer);
        assert_eq!(semple_task_dims(ptr::null(), ptr::null_mut(), ptr::null_mut()), SempleStatus::NullPointer);

        let lv = task("lotka_volterra");
        let (y, theta) = ([0.0; 9], [0.0; 4]);
        let mut out = 0.0;
        assert_eq!(
            semple_task_loglik(lv, y.as_ptr(), 9, theta.as_ptr(), 4, &mut out),
            SempleStatus::MissingExactLikelihood
        );
        semple_task_free(lv);
        semple_task_free(ptr::null_mut());
    }
}

#[test]
fn gllim_fit_sample_and_serialize() {
    let t = task("linear_gaussian");
    let n = 2000;
    unsafe {
        let mut thetas = vec![0.0; 2 * n];
        semple_task_sample_prior(t, n, 1, thetas.as_mut_ptr(), thetas.len());
        let mut ys = vec![0.0; 2 * n];
        for i in 0..n {
            let mut y = [0.0; 2];
            assert_eq!(semple_task_simulate(t, thetas[2 * i..].as_ptr(), 2, 1, i as u64, y.as_mut_ptr(), 2), SempleStatus::Ok);
            ys[2 * i..2 * i + 2].copy_from_slice(&y);
        }
        let mut g = ptr::null_mut();
        assert_eq!(semple_gllim_fit(thetas.as_ptr(), ys.as_ptr(), n, 2, 2, 2, 0, 5, &mut g), SempleStatus::Ok);
        let (mut k, mut l, mut d) = (0, 0, 0);
        semple_gllim_shape(g, &mut k, &mut l, &mut d);
        assert_eq!((l, d), (2, 2));
        assert!((1..=2).contains(&k));

        let y_o = [0.8, -0.4];
        let mut draws = vec![0.0; 2 * 4000];
        assert_eq!(semple_gllim_sample_posterior(g, y_o.as_ptr(), 2, 4000, 1.0, 2, draws.as_mut_ptr(), draws.len()), SempleStatus::Ok);
        let mean0 = draws.iter().step_by(2).sum::<f64>() / 4000.0;
        assert!((mean0 - 0.64).abs() < 0.05, "{mean0}");

        let mut text = ptr::null_mut();
        assert_eq!(semple_gllim_to_text(g, &mut text), SempleStatus::Ok);
        let mut g2 = ptr::null_mut();
        assert_eq!(semple_gllim_from_text(text, &mut g2), SempleStatus::Ok);
        semple_string_free(text);
        let theta = [0.3, 0.1];
        let (mut a, mut b) = (0.0, 0.0);
        semple_gllim_loglik(g, y_o.as_ptr(), 2, theta.as_ptr(), 2, &mut a);
        semple_gllim_loglik(g2, y_o.as_ptr(), 2, theta.as_ptr(), 2, &mut b);
        assert_eq!(a, b);
        let mut p = 0.0;
        assert_eq!(semple_gllim_posterior_logpdf(g2, theta.as_ptr(), 2, y_o.as_ptr(), 2, &mut p), SempleStatus::Ok);
        assert!(p.is_finite());
        assert_eq!(semple_gllim_prune(g2, 0.0), SempleStatus::Ok);
        assert_eq!(semple_gllim_prune(g2, 1.5), SempleStatus::InvalidArgument);

        semple_gllim_free(g);
        semple_gllim_free(g2);
        semple_task_free(t);
    }
}

#[test]
fn metrics() {
    let a: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
    let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
    let mut w = 0.0;
    unsafe {
        assert_eq!(semple_w2(a.as_ptr(), 100, b.as_ptr(), 100, 2, 100, 1, 0, &mut w), SempleStatus::Ok);
        // A pure translation by (0.5, 0.5).
        assert!((w - 0.5f64.hypot(0.5)).abs() < 1e-10, "{w}");
        let mut c = 0.0;
        assert_eq!(semple_c2st(a.as_ptr(), 100, a.as_ptr(), 100, 2, 0, &mut c), SempleStatus::Ok);
        assert!((0.5..=1.0).contains(&c));
        assert_eq!(semple_c2st(a.as_ptr(), 10, b.as_ptr(), 10, 2, 0, &mut c), SempleStatus::InvalidArgument);
    }
}

#[test]
fn short_run() {
    let t = task("linear_gaussian");
    let cfg = CString::new("semple.R = 1\nsemple.N = 300\nsemple.K0 = 2\n").unwrap();
    let y = [0.2, 0.1];
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(semple_run(t, y.as_ptr(), 2, cfg.as_ptr(), &mut s), SempleStatus::Ok);
        let (mut r, mut c) = (0, 0);
        semple_samples_shape(s, &mut r, &mut c);
        assert_eq!((r, c), (300, 2));
        let mut buf = vec![0.0; r * c];
        assert_eq!(semple_samples_copy(s, buf.as_mut_ptr(), buf.len()), SempleStatus::Ok);
        assert!(buf.iter().all(|v| v.is_finite()));
        semple_samples_free(s);

        let bad = CString::new("semple.nope = 1\n").unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(semple_run(t, y.as_ptr(), 2, bad.as_ptr(), &mut s), SempleStatus::InvalidArgument);
        assert!(last_error().contains("semple.nope"));
        semple_task_free(t);
    }
}
