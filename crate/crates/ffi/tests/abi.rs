use std::ffi::{CStr, CString};
use std::ptr;

use havok_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(havok_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn sine(n: usize, dt: f64) -> Vec<f64> {
    // A little deterministic jitter gives the third mode that acts as forcing.
    (0..n)
        .map(|i| (i as f64 * dt).sin() + 1e-6 * ((i * 7919 % 1000) as f64 / 1000.0 - 0.5))
        .collect()
}

fn fit(x: &[f64], rank: &str) -> *mut HavokModelHandle {
    let rank = CString::new(rank).unwrap();
    let mut model = ptr::null_mut();
    let st = unsafe {
        havok_model_fit(
            x.as_ptr(),
            x.len(),
            0.01,
            10,
            20,
            rank.as_ptr(),
            0.0,
            1e-9,
            &mut model,
        )
    };
    assert_eq!(st, HavokStatus::Ok, "{}", last_error());
    assert!(!model.is_null());
    model
}

#[test]
fn fit_inspect_and_free() {
    let x = sine(20_000, 0.01);
    let model = fit(&x, "3");
    unsafe {
        let mut r = 0;
        assert_eq!(havok_model_rank(model, &mut r), HavokStatus::Ok);
        assert_eq!(r, 3);

        let mut len = 0;
        assert_eq!(
            havok_model_dynamics(model, ptr::null_mut(), 0, &mut len),
            HavokStatus::BufferTooSmall
        );
        assert_eq!(len, 4);
        let mut a = [0.0; 4];
        assert_eq!(
            havok_model_dynamics(model, a.as_mut_ptr(), 4, &mut len),
            HavokStatus::Ok
        );
        // Rotation at unit frequency: trace ~ 0, determinant ~ 1.
        assert!((a[0] + a[3]).abs() < 0.05, "{a:?}");
        assert!((a[0] * a[3] - a[1] * a[2] - 1.0).abs() < 0.05, "{a:?}");

        let mut b = [0.0; 2];
        assert_eq!(
            havok_model_forcing_gain(model, b.as_mut_ptr(), 2, &mut len),
            HavokStatus::Ok
        );
        assert_eq!(len, 2);

        let mut s = vec![0.0; 20];
        assert_eq!(
            havok_model_singular_values(model, s.as_mut_ptr(), 20, &mut len),
            HavokStatus::Ok
        );
        assert_eq!(len, 20);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));

        assert_eq!(
            havok_model_forcing(model, ptr::null_mut(), 0, &mut len),
            HavokStatus::BufferTooSmall
        );
        assert_eq!(len, 20_000 - 19 * 10);

        havok_model_free(model);
        havok_model_free(ptr::null_mut());
    }
}

#[test]
fn json_round_trip_and_forecast() {
    let x = sine(20_000, 0.01);
    let model = fit(&x, "3");
    unsafe {
        let mut json = ptr::null_mut();
        assert_eq!(havok_model_to_json(model, &mut json), HavokStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(havok_model_from_json(json, &mut loaded), HavokStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(havok_model_to_json(loaded, &mut again), HavokStatus::Ok);
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(again));
        havok_string_free(json);
        havok_string_free(again);

        // Project the signal, then run the linear block from the first state.
        let window = &x[..600];
        let mut len = 0;
        havok_model_project(
            loaded,
            window.as_ptr(),
            window.len(),
            ptr::null_mut(),
            0,
            &mut len,
        );
        let mut v = vec![0.0; len];
        assert_eq!(
            havok_model_project(
                loaded,
                window.as_ptr(),
                window.len(),
                v.as_mut_ptr(),
                len,
                &mut len
            ),
            HavokStatus::Ok
        );
        let rows = len / 3;
        let v0 = [v[0], v[1]];
        let forcing: Vec<f64> = (0..rows).map(|i| v[3 * i + 2]).collect();
        let steps = 300;
        let mut x_hat = vec![0.0; steps];
        let st = havok_model_forecast(
            loaded,
            v0.as_ptr(),
            2,
            HavokForcingMode::Measured,
            forcing.as_ptr(),
            forcing.len(),
            steps,
            x_hat.as_mut_ptr(),
        );
        assert_eq!(st, HavokStatus::Ok, "{}", last_error());
        for (p, t) in x_hat.iter().zip(window) {
            assert!((p - t).abs() < 1e-2, "{p} vs {t}");
        }

        let st = havok_model_forecast(
            loaded,
            v0.as_ptr(),
            1,
            HavokForcingMode::Zero,
            ptr::null(),
            0,
            steps,
            x_hat.as_mut_ptr(),
        );
        assert_eq!(st, HavokStatus::Data);
        assert!(last_error().contains("initial state"));

        // Loaded models carry no training forcing.
        havok_model_forcing(loaded, ptr::null_mut(), 0, &mut len);
        assert_eq!(len, 0);
        havok_model_free(loaded);
        havok_model_free(model);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let x = sine(500, 0.01);
    let mut model = ptr::null_mut();
    unsafe {
        let one = CString::new("1").unwrap();
        let st = havok_model_fit(
            x.as_ptr(),
            x.len(),
            0.01,
            1,
            5,
            one.as_ptr(),
            0.0,
            1e-9,
            &mut model,
        );
        assert_eq!(st, HavokStatus::Config);
        assert!(model.is_null());
        assert!(last_error().contains("at least 2"));

        let bad = CString::new("lots").unwrap();
        let st = havok_model_fit(
            x.as_ptr(),
            x.len(),
            0.01,
            1,
            5,
            bad.as_ptr(),
            0.0,
            1e-9,
            &mut model,
        );
        assert_eq!(st, HavokStatus::Config);

        let st = havok_model_fit(
            x.as_ptr(),
            10,
            0.01,
            1,
            50,
            ptr::null(),
            0.0,
            1e-9,
            &mut model,
        );
        assert_eq!(st, HavokStatus::Data);

        let st = havok_model_fit(
            ptr::null(),
            10,
            0.01,
            1,
            5,
            ptr::null(),
            0.0,
            1e-9,
            &mut model,
        );
        assert_eq!(st, HavokStatus::NullPointer);
        assert!(last_error().contains("`x`"));

        let st = havok_model_fit(
            x.as_ptr(),
            x.len(),
            0.01,
            1,
            5,
            ptr::null(),
            0.0,
            1e-9,
            ptr::null_mut(),
        );
        assert_eq!(st, HavokStatus::NullPointer);

        let mut r = 0;
        assert_eq!(
            havok_model_rank(ptr::null(), &mut r),
            HavokStatus::NullPointer
        );

        let junk = CString::new("{\"r\": 3}").unwrap();
        assert_eq!(
            havok_model_from_json(junk.as_ptr(), &mut model),
            HavokStatus::Data
        );
    }
}

#[test]
fn error_message_is_per_thread() {
    let mut r = 0;
    assert_eq!(
        unsafe { havok_model_rank(ptr::null(), &mut r) },
        HavokStatus::NullPointer
    );
    let other = std::thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
    assert!(last_error().contains("model"));
}

#[test]
fn forcing_intervals() {
    let v = [0.0, 0.1, 0.2, 0.0, 0.0, -0.3, 0.0, 0.0, 0.0, 0.5];
    let mut starts = [0usize; 8];
    let mut ends = [0usize; 8];
    let mut count = 0;
    unsafe {
        assert_eq!(
            havok_forcing_active(
                v.as_ptr(),
                v.len(),
                0.045,
                0,
                starts.as_mut_ptr(),
                ends.as_mut_ptr(),
                8,
                &mut count
            ),
            HavokStatus::Ok
        );
        assert_eq!(count, 3);
        assert_eq!(
            (&starts[..3], &ends[..3]),
            (&[1, 5, 9][..], &[3, 6, 10][..])
        );
        // Gaps shorter than the merge window are joined: 2 < 3 but 3 == 3.
        assert_eq!(
            havok_forcing_active(
                v.as_ptr(),
                v.len(),
                0.045,
                3,
                starts.as_mut_ptr(),
                ends.as_mut_ptr(),
                8,
                &mut count
            ),
            HavokStatus::Ok
        );
        assert_eq!(count, 2);
        assert_eq!((&starts[..2], &ends[..2]), (&[1, 9][..], &[6, 10][..]));
        assert_eq!(
            havok_forcing_active(
                v.as_ptr(),
                v.len(),
                0.045,
                0,
                starts.as_mut_ptr(),
                ends.as_mut_ptr(),
                1,
                &mut count
            ),
            HavokStatus::BufferTooSmall
        );
        assert_eq!(count, 3);
    }
}

#[test]
fn delay_and_dimension_match_core() {
    use havok_core::embedding::{select_delay, select_dimension, FnnOptions};
    let x: Vec<f64> = (0..4000)
        .map(|i| (i as f64 * 0.05).sin() + 0.3 * (i as f64 * 0.013).cos())
        .collect();
    let (mut tau, mut dim) = (0, 0);
    unsafe {
        assert_eq!(
            havok_select_delay(x.as_ptr(), x.len(), 60, 16, &mut tau),
            HavokStatus::Ok
        );
        assert_eq!(tau, select_delay(&x, 60, 16).unwrap().tau);
        assert_eq!(
            havok_select_dimension(x.as_ptr(), x.len(), tau, 6, 0.1, 0.0, 0.0, &mut dim),
            HavokStatus::Ok
        );
        assert_eq!(
            dim,
            select_dimension(&x, tau, 6, 0.1, FnnOptions::default())
                .unwrap()
                .dim
        );
        assert_eq!(
            havok_select_delay(x.as_ptr(), x.len(), 0, 16, &mut tau),
            HavokStatus::Config
        );
    }
}

#[test]
fn distribution_fit() {
    // Standard normal quantiles at (i - 0.5) / n: fits N(0, ~1) and passes.
    let n = 400;
    let samples: Vec<f64> = (1..=n)
        .map(|i| {
            let p = (i as f64 - 0.5) / n as f64;
            normal_quantile(p)
        })
        .collect();
    let family = CString::new("Normal").unwrap();
    let mut params = [0.0; 4];
    let (mut np, mut d, mut p, mut pass) = (0, 0.0, 0.0, 0);
    unsafe {
        let st = havok_fit_distribution(
            samples.as_ptr(),
            n,
            family.as_ptr(),
            0.05,
            params.as_mut_ptr(),
            4,
            &mut np,
            &mut d,
            &mut p,
            &mut pass,
        );
        assert_eq!(st, HavokStatus::Ok, "{}", last_error());
        assert_eq!(np, 2);
        assert!(params[0].abs() < 1e-12);
        assert!((params[1] - 1.0).abs() < 0.02, "{params:?}");
        assert_eq!(pass, 1);
        assert!(p > 0.9);

        let bogus = CString::new("Cauchy").unwrap();
        let st = havok_fit_distribution(
            samples.as_ptr(),
            n,
            bogus.as_ptr(),
            0.05,
            params.as_mut_ptr(),
            4,
            &mut np,
            &mut d,
            &mut p,
            &mut pass,
        );
        assert_eq!(st, HavokStatus::Config);
    }
}

/// Inverse standard normal cdf: bisection on a Simpson-rule cdf.
fn normal_quantile(p: f64) -> f64 {
    let cdf = |x: f64| {
        let n = 2000;
        let (a, b) = (0.0, x);
        let h = (b - a) / n as f64;
        let f = |t: f64| (-t * t / 2.0).exp();
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
