use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use holostream::agent::{Checkpoint, PolicyParams};
use holostream::environment::Scheme;
use holostream_ffi::*;
use rand::SeedableRng;

fn last_error() -> String {
    let p = hs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_env(scheme: &str, config: Option<&str>) -> *mut HsEnv {
    let scheme = CString::new(scheme).unwrap();
    let config = config.map(|c| CString::new(c).unwrap());
    let mut env = ptr::null_mut();
    let status = unsafe { hs_env_new(config.as_ref().map_or(ptr::null(), |c| c.as_ptr()), scheme.as_ptr(), &mut env) };
    assert_eq!(status, HsStatus::Ok);
    env
}

#[test]
fn episode_through_the_c_interface_matches_the_library() {
    let env = new_env("B2", None);
    let (mut obs_len, mut heads, mut choices) = (0, 0, 0);
    assert_eq!(unsafe { hs_env_dims(env, &mut obs_len, &mut heads, &mut choices) }, HsStatus::Ok);
    assert_eq!((obs_len, heads, choices), (48, 18, 5));

    let mut obs = vec![0.0; obs_len];
    assert_eq!(unsafe { hs_env_reset(env, 3, obs.as_mut_ptr(), obs_len) }, HsStatus::Ok);

    let mut lib = holostream::environment::HoloEnv::new(
        holostream::config::Config::default().episode().unwrap(),
        Scheme::B2,
    )
    .unwrap();
    use holostream::agent::Environment;
    assert_eq!(lib.reset_episode(3).unwrap(), obs);

    let action = vec![1usize; heads];
    let mut result = HsStepResult::default();
    loop {
        let status = unsafe { hs_env_step(env, action.as_ptr(), heads, obs.as_mut_ptr(), obs_len, &mut result) };
        assert_eq!(status, HsStatus::Ok);
        let fb = lib.act(&action).unwrap();
        assert_eq!(fb.obs, obs);
        assert_eq!(fb.reward, result.reward);
        assert_eq!(fb.feasible, result.feasible);
        if result.done {
            assert_eq!(result.slot, 20);
            break;
        }
    }
    // stepping past the end is an error with a message
    let status = unsafe { hs_env_step(env, action.as_ptr(), heads, obs.as_mut_ptr(), obs_len, &mut result) };
    assert_eq!(status, HsStatus::Config);
    assert!(last_error().contains("slot 21"));
    unsafe { hs_env_free(env) };
}

#[test]
fn errors_map_to_status_codes() {
    let scheme = CString::new("B9").unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { hs_env_new(ptr::null(), scheme.as_ptr(), &mut env) }, HsStatus::Config);
    assert!(last_error().contains("B9"));
    assert!(env.is_null());

    let bad = CString::new("[scenario]\nusers = \"three\"\n").unwrap();
    let b1 = CString::new("B1").unwrap();
    assert_eq!(unsafe { hs_env_new(bad.as_ptr(), b1.as_ptr(), &mut env) }, HsStatus::Config);
    assert!(last_error().contains("line 2"));

    assert_eq!(unsafe { hs_env_new(ptr::null(), ptr::null(), &mut env) }, HsStatus::NullPointer);

    let env = new_env("B1", None);
    let mut obs = vec![0.0; 3];
    assert_eq!(unsafe { hs_env_reset(env, 0, obs.as_mut_ptr(), 3) }, HsStatus::Dimension);
    let mut obs = vec![0.0; 48];
    let action = [7usize; 18];
    let mut r = HsStepResult::default();
    assert_eq!(unsafe { hs_env_reset(env, 0, obs.as_mut_ptr(), 48) }, HsStatus::Ok);
    // B1 has no compression, so choice 7 is out of range
    assert_eq!(
        unsafe { hs_env_step(env, action.as_ptr(), 18, obs.as_mut_ptr(), 48, &mut r) },
        HsStatus::InvalidArgument
    );
    unsafe { hs_env_free(env) };
    unsafe { hs_env_free(ptr::null_mut()) };
}

#[test]
fn required_sinr_and_infeasible_deadline() {
    let (mut g, mut ok) = (0.0, false);
    assert_eq!(unsafe { hs_required_sinr(1e5, 0.0, 0.01, 10e6, 0.5, &mut g, &mut ok) }, HsStatus::Ok);
    assert!(ok);
    assert!((g - (2f64.powf(1.0) - 1.0)).abs() < 1e-12);
    assert_eq!(unsafe { hs_required_sinr(1e5, 0.02, 0.01, 10e6, 0.5, &mut g, &mut ok) }, HsStatus::Ok);
    assert!(!ok);
    assert_eq!(unsafe { hs_required_sinr(1e5, 0.0, -1.0, 10e6, 0.5, &mut g, &mut ok) }, HsStatus::InvalidArgument);
}

#[test]
fn single_user_beamforming_matches_closed_form() {
    // one user, one AP, two antennas: P* = Γ N0 W / ‖h‖²
    let h = [1e-4, 2e-4, -3e-4, 0.5e-4];
    let norm2: f64 = h.iter().map(|v| v * v).sum();
    let (psd, bw, gamma) = (4e-21, 20e6, 3.0);
    let mut w = [0.0; 4];
    let mut power = 0.0;
    let mut status = HsSolveStatus::NumericalFailure;
    let code = unsafe {
        hs_solve_beamforming(h.as_ptr(), 1, 1, 2, &gamma, &1.0, psd, bw, w.as_mut_ptr(), &mut power, &mut status)
    };
    assert_eq!(code, HsStatus::Ok);
    assert_eq!(status, HsSolveStatus::Feasible);
    let expect = gamma * psd * bw / norm2;
    assert!((power - expect).abs() / expect < 1e-5, "{power} vs {expect}");

    let mut sinr = 0.0;
    assert_eq!(unsafe { hs_sinr(h.as_ptr(), w.as_ptr(), 1, 1, 2, psd, bw, &mut sinr) }, HsStatus::Ok);
    assert!((sinr - gamma).abs() / gamma < 1e-5);

    // a cap far below P* is infeasible
    let tiny = expect * 1e-3;
    let code = unsafe {
        hs_solve_beamforming(h.as_ptr(), 1, 1, 2, &gamma, &tiny, psd, bw, w.as_mut_ptr(), &mut power, &mut status)
    };
    assert_eq!(code, HsStatus::Ok);
    assert_eq!(status, HsSolveStatus::Infeasible);
    assert_eq!(power, 0.0);
}

#[test]
fn policy_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let params = PolicyParams::new(48, 18, 10, &[8], false, &mut rng).unwrap();
    let codec = Scheme::Proposed.codec(5);
    Checkpoint::new("proposed", 0.9, codec, params).save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut policy = ptr::null_mut();
    assert_eq!(unsafe { hs_policy_load(c_path.as_ptr(), &mut policy) }, HsStatus::Ok);
    let obs = vec![0.1; 48];
    let mut choices = vec![99usize; 18];
    assert_eq!(unsafe { hs_policy_act(policy, obs.as_ptr(), 48, choices.as_mut_ptr(), 18) }, HsStatus::Ok);
    // a fresh policy is uniform, so the greedy pick is the first choice
    assert!(choices.iter().all(|&c| c == 0));
    assert_eq!(unsafe { hs_policy_act(policy, obs.as_ptr(), 48, choices.as_mut_ptr(), 17) }, HsStatus::Dimension);
    unsafe { hs_policy_free(policy) };

    let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { hs_policy_load(missing.as_ptr(), &mut policy) }, HsStatus::Io);
}

#[test]
fn c_program_links_against_the_static_library() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps; the static library sits one level up
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libholostream_ffi.a");
    assert!(lib.is_file(), "missing {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields[0], "20");
    assert_eq!(&fields[2..], ["48", "18", "5", "1"]);
}
