use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use netinfer_ffi::*;

fn last_error() -> String {
    let p = ni_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn graph(n: usize) -> *mut NiGraph {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { ni_graph_generate_ws(n, 4, 0.2, 1, &mut g) }, NiStatus::Ok);
    g
}

#[test]
fn graph_roundtrip() {
    let g = graph(10);
    let (mut n, mut e) = (0, 0);
    unsafe {
        assert_eq!(ni_graph_node_count(g, &mut n), NiStatus::Ok);
        assert_eq!(ni_graph_edge_count(g, &mut e), NiStatus::Ok);
    }
    assert_eq!((n, e), (10, 20));
    let mut a = vec![0.0; 100];
    assert_eq!(unsafe { ni_graph_adjacency(g, a.as_mut_ptr(), a.len()) }, NiStatus::Ok);
    assert_eq!(a.iter().sum::<f64>(), 40.0);
    for i in 0..10 {
        assert_eq!(a[i * 10 + i], 0.0);
        for j in 0..10 {
            assert_eq!(a[i * 10 + j], a[j * 10 + i]);
        }
    }
    let mut score = 0.0;
    assert_eq!(unsafe { ni_auc(a.as_ptr(), a.as_ptr(), 10, &mut score) }, NiStatus::Ok);
    assert_eq!(score, 1.0);
    assert_eq!(unsafe { ni_graph_adjacency(g, a.as_mut_ptr(), 99) }, NiStatus::InvalidArgument);
    assert!(last_error().contains("99"));
    unsafe { ni_graph_free(g) };
}

#[test]
fn bad_arguments_set_status_and_message() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { ni_graph_generate_ws(10, 3, 0.2, 1, &mut g) }, NiStatus::InvalidArgument);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { ni_graph_generate_ws(10, 4, 0.2, 1, ptr::null_mut()) }, NiStatus::NullPointer);
    let mut n = 0;
    assert_eq!(unsafe { ni_graph_node_count(ptr::null(), &mut n) }, NiStatus::NullPointer);
    unsafe {
        ni_graph_free(ptr::null_mut());
        ni_dataset_free(ptr::null_mut());
        ni_experiment_free(ptr::null_mut());
        ni_string_free(ptr::null_mut());
    }
}

#[test]
fn dataset_simulate_save_load() {
    let g = graph(8);
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ni_dataset_simulate(g, NiModel::Cml, 2, 10, 5, 3, &mut ds) }, NiStatus::Ok);
    let (mut s, mut t, mut n, mut d) = (0, 0, 0, 0);
    assert_eq!(unsafe { ni_dataset_shape(ds, &mut s, &mut t, &mut n, &mut d) }, NiStatus::Ok);
    assert_eq!((s, t, n, d), (4, 5, 8, 1));
    let mut states = vec![0f32; s * t * n * d];
    assert_eq!(unsafe { ni_dataset_states(ds, states.as_mut_ptr(), states.len()) }, NiStatus::Ok);
    assert!(states.iter().all(|x| (0.0..=1.0).contains(x)));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("ds").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ni_dataset_save(ds, path.as_ptr()) }, NiStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ni_dataset_load(path.as_ptr(), &mut back) }, NiStatus::Ok);
    let mut again = vec![0f32; states.len()];
    assert_eq!(unsafe { ni_dataset_states(back, again.as_mut_ptr(), again.len()) }, NiStatus::Ok);
    assert_eq!(states, again);

    let nowhere = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { ni_dataset_load(nowhere.as_ptr(), &mut none) }, NiStatus::MissingInput);
    unsafe {
        ni_dataset_free(ds);
        ni_dataset_free(back);
        ni_graph_free(g);
    }
}

#[test]
fn experiment_runs_and_reports_json() {
    let json = CString::new(
        r#"{"task":"reconstruct","dynamics":{"kind":"voter"},
            "graph":{"n":6,"k":2,"p_rewire":0.2,"seed":1},
            "dataset":{"count":10,"steps":6,"record_length":1,"seed":2}}"#,
    )
    .unwrap();
    let mut exp = ptr::null_mut();
    let st = unsafe { ni_experiment_from_json(json.as_ptr(), &mut exp) };
    assert_eq!(st, NiStatus::Ok, "{}", last_error());
    for kv in ["train.epochs=1", "train.batch_size=16", "train.edge_sizes=[8]"] {
        let kv = CString::new(kv).unwrap();
        assert_eq!(unsafe { ni_experiment_set(exp, kv.as_ptr()) }, NiStatus::Ok, "{}", last_error());
    }
    let bad = CString::new("train.nonsense=1").unwrap();
    assert_eq!(unsafe { ni_experiment_set(exp, bad.as_ptr()) }, NiStatus::Config);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ni_experiment_run(exp, &mut out) }, NiStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["task"], "reconstruct");
    assert!(v["auc"].is_number());
    unsafe {
        ni_string_free(out);
        ni_experiment_free(exp);
    }

    let missing_task = CString::new(r#"{"dynamics":{"kind":"voter"}}"#).unwrap();
    let mut e2 = ptr::null_mut();
    assert_eq!(unsafe { ni_experiment_from_json(missing_task.as_ptr(), &mut e2) }, NiStatus::Config);
    assert!(e2.is_null());
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(ni_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api_and_compiles_as_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/netinfer.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ni_graph_generate_ws",
        "ni_dataset_simulate",
        "ni_experiment_run",
        "ni_last_error_message",
        "NI_STATUS_OK",
        "typedef struct NiGraph NiGraph",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"netinfer.h\"\nint main(void) { NiGraph *g = 0; NiStatus s = ni_graph_generate_ws(10, 4, 0.2, 1, &g); ni_graph_free(g); return (int)s; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
