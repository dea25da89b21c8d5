use std::path::PathBuf;
use std::ffi::{CStr, CString};
use std::ptr;

use dome::network::{build, save, Architecture, Head, NetworkSpec};
use dome_ffi::*;

fn last_error() -> String {
    let p = dome_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn mlp_checkpoint() -> (tempfile::TempDir, PathBuf, dome::network::Network) {
    let net = build(&NetworkSpec {
        seed: 3,
        ..NetworkSpec::new(Architecture::Mlp, Head::Mdome, 3)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.dome");
    save(&net, &path).unwrap();
    (dir, path, net)
}

unsafe fn load(path: &PathBuf) -> *mut DomeNetwork {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(dome_network_load(c.as_ptr(), &mut h), DomeStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn scalar_activations_match_the_library() {
    let mut y = 0.0;
    let mut g = DomeGradient::default();
    unsafe {
        assert_eq!(dome_scalar_forward(1.0, 1.0, 1.0, &mut y), DomeStatus::Ok);
        assert_eq!(dome_scalar_backward(1.0, 1.0, 1.0, &mut g), DomeStatus::Ok);
    }
    assert!(dome_last_error().is_null());
    let p = dome::activations::DomeParams::default();
    assert_eq!(y, dome::activations::dome_forward(1.0, &p));
    assert_eq!(g.dx, dome::activations::dome_backward(1.0, &p).dx);
    assert!((y - 0.5 * (2.0 - (-4.0f64).exp())).abs() < 1e-15);

    let mut pg = PdomeGradient::default();
    unsafe {
        assert_eq!(dome_pdome_forward(-1.0, 1.0, 1.0, 0.1, &mut y), DomeStatus::Ok);
        assert_eq!(dome_pdome_backward(-1.0, 1.0, 1.0, 0.1, &mut pg), DomeStatus::Ok);
    }
    assert!((y - ((-4.0f64).exp() - 0.1)).abs() < 1e-15);
    assert_eq!(pg.dpi, -1.0);
}

#[test]
fn invalid_parameters_report_status_and_message() {
    let mut y = 0.0;
    unsafe {
        assert_eq!(dome_scalar_forward(0.0, -1.0, 1.0, &mut y), DomeStatus::InvalidArgument);
        assert!(last_error().contains("mu"), "{}", last_error());
        assert_eq!(dome_pdome_forward(0.0, 1.0, 1.0, -0.5, &mut y), DomeStatus::InvalidArgument);
        assert_eq!(dome_scalar_forward(0.0, 1.0, 1.0, ptr::null_mut()), DomeStatus::NullPointer);
        assert_eq!(last_error(), "out is null");
        assert_eq!(dome_scalar_forward(0.0, 1.0, 1.0, &mut y), DomeStatus::Ok);
    }
    assert!(dome_last_error().is_null());
    let name = unsafe { CStr::from_ptr(dome_status_name(DomeStatus::BufferTooSmall)) };
    assert_eq!(name.to_str().unwrap(), "buffer too small");
}

#[test]
fn mdome_scores_sum_to_one() {
    let x = [0.3, -0.2, 0.9];
    let mut out = [0.0; 4];
    unsafe {
        assert_eq!(dome_mdome_forward(x.as_ptr(), 4, 1.0, 5.0, out.as_mut_ptr(), 4), DomeStatus::Ok);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            dome_mdome_forward(x.as_ptr(), 4, 1.0, 5.0, out.as_mut_ptr(), 3),
            DomeStatus::BufferTooSmall
        );
        assert_eq!(dome_mdome_forward(x.as_ptr(), 1, 1.0, 5.0, out.as_mut_ptr(), 4), DomeStatus::InvalidArgument);
    }
}

#[test]
fn network_handle_round_trip() {
    let (_dir, path, net) = mlp_checkpoint();
    let x = [0.1, 0.2, 0.8, 0.7, 0.5, 0.5];
    let reference = dome::Tensor::new(vec![3, 2], x.to_vec()).unwrap();
    unsafe {
        let h = load(&path);
        let (mut input_len, mut width, mut dim) = (0, 0, 0);
        assert_eq!(dome_network_dims(h, &mut input_len, &mut width, &mut dim), DomeStatus::Ok);
        assert_eq!((input_len, width, dim), (2, 3, 2));

        let mut labels = [usize::MAX; 3];
        assert_eq!(dome_network_predict(h, x.as_ptr(), 3, labels.as_mut_ptr()), DomeStatus::Ok);
        assert_eq!(labels.to_vec(), net.predict(&reference).unwrap());

        let mut out = [0.0; 9];
        assert_eq!(dome_network_output(h, x.as_ptr(), 3, out.as_mut_ptr(), 9), DomeStatus::Ok);
        assert_eq!(&out[..], net.output(&reference).unwrap().data());
        assert_eq!(dome_network_output(h, x.as_ptr(), 3, out.as_mut_ptr(), 8), DomeStatus::BufferTooSmall);

        let mut emb = [0.0; 6];
        assert_eq!(dome_network_embed(h, x.as_ptr(), 3, emb.as_mut_ptr(), 6), DomeStatus::Ok);
        assert_eq!(&emb[..], net.embed(&reference).unwrap().data());
        dome_network_free(h);
    }
}

#[test]
fn bad_checkpoints_are_rejected() {
    let mut h = ptr::null_mut();
    unsafe {
        let bytes = b"DOME2....";
        assert_eq!(dome_network_from_bytes(bytes.as_ptr(), bytes.len(), &mut h), DomeStatus::Format);
        assert!(h.is_null());
        let missing = CString::new("/nonexistent/model.dome").unwrap();
        assert_eq!(dome_network_load(missing.as_ptr(), &mut h), DomeStatus::Io);
        assert_eq!(dome_network_load(ptr::null(), &mut h), DomeStatus::NullPointer);
        assert_eq!(dome_network_predict(ptr::null(), ptr::null(), 0, ptr::null_mut()), DomeStatus::NullPointer);
        dome_network_free(ptr::null_mut());

        let bytes = mlp_checkpoint().2.to_bytes();
        assert_eq!(dome_network_from_bytes(bytes.as_ptr(), bytes.len(), &mut h), DomeStatus::Ok);
        let x = [0.5; 4];
        let mut labels = [usize::MAX; 2];
        assert_eq!(dome_network_predict(h, x.as_ptr(), 2, labels.as_mut_ptr()), DomeStatus::Ok);
        assert!(labels.iter().all(|&l| l < 3));
        dome_network_free(h);
    }
}
