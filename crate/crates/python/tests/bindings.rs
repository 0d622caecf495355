use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &std::ffi::CStr) {
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(spinecomp_py::spinecomp_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("sc", module).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn metrics_round_trip_through_python() {
    run(c"
a = sc.PointCloud([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
b = sc.PointCloud([[0.0, 0.1, 0.0], [2.0, 0.1, 0.0]])
assert sc.chamfer(a, a) == 0.0
assert abs(sc.snr(b, a)[0] - 20.0) < 1e-9
assert abs(sc.emd(sc.PointCloud([[0, 0, 0]]), sc.PointCloud([[3, 4, 0]])) - 5.0) < 1e-12
assert sc.fscore(a, a, 0.5) == 1.0
assert sc.voxel_iou(a, a, 1.0) == 1.0
s = sc.chamfer_split(a, a, a, 0.5)
assert s['cd_top'] == 0.0 and s['cd_bottom'] is None
");
}

#[test]
fn errors_carry_categories() {
    run(c"
try:
    sc.emd(sc.PointCloud([[0, 0, 0]]), sc.PointCloud([[0, 0, 0], [1, 1, 1]]))
    raise AssertionError('accepted')
except sc.SpinecompError as e:
    assert e.category == 'unequal-sizes', e.category
try:
    sc.PointCloud([[0, 0, 0]], labels=[1, 2])
    raise AssertionError('accepted')
except sc.SpinecompError as e:
    assert e.category == 'dimension-mismatch', e.category
try:
    sc.resolve_config(overrides=['nope.key=1'])
    raise AssertionError('accepted')
except ValueError:
    pass
");
}

#[test]
fn model_completes_to_its_output_size() {
    run(c"
import random
random.seed(0)
m = sc.CompletionModel('desk', 1)
cloud = sc.PointCloud([[random.uniform(-5, 5) for _ in range(3)] for _ in range(200)])
out = m.complete(cloud)
assert len(out) == m.n_output
assert m.parameter_count > 0
");
}
