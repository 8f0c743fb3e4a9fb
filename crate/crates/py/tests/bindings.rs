// SPDX-License-Identifier: MIT OR Apache-2.0

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) {
    Python::with_gil(|py| {
        let module = pyo3::wrap_pymodule!(neurotype_py::neurotype_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("nt", module).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn classify_layer_from_python() {
    run(r#"
p = nt.classify_layer([[1.0, 0.0, 2.0, -1.0], [1.0, 3.0, 0.0, -1.0], [0.5, 0.0, 0.0, 0.0]])
assert p["all-shared"] == [0]
assert p["specific"] == [[2], [1], []]
assert p["non-activated"] == [3]
"#);
}

#[test]
fn masked_suite_zeroes_masked_neurons() {
    run(r#"
m = nt.ToyModel(2, 8, 32, 10, seed=3)
t = m.run_suite(["a", "b"], 4, seed=1)
c = nt.classify(t)
mask = nt.build_typed_mask(c, "all-shared")
masked = m.run_suite(["a", "b"], 4, seed=1, mask=mask)
for s, l, neurons in mask.entries():
    for p in range(2):
        v = masked.vector(s, p, l)
        assert all(v[i] == 0.0 for i in neurons)
assert abs(mask.pct() - sum(r["all-shared"] for r in c.aggregate_ratios()) / 2) < 1e-9
"#);
}

#[test]
fn errors_become_value_errors() {
    run(r#"
try:
    nt.generation_impact([1.0, 2.0], [1.0])
except ValueError as e:
    assert "value norms" in str(e)
else:
    raise AssertionError
rows = nt.summarize_deltas([("baseline", "x", 38.39), ("w/o. all", "x", 4.84)])
assert f"{rows[1][2]:.2f}" == "-87.39"
"#);
}
