//! Loads the module into an embedded interpreter and drives it from Python.

use edgeorch::edgeorch as edgeorch_module;
use pyo3::prelude::*;

#[test]
fn module_works_from_python() {
    pyo3::append_to_inittab!(edgeorch_module);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            c"
import edgeorch
assert len(edgeorch.bundled_scenarios()) == 5
svc = edgeorch.FogService.from_toml('name = \"web\"\\nreplicas = 2\\ncpu_request = 100\\ncpu_limit = 100\\n')
assert svc.validate() == [] and svc.total_replicas == 2
cluster = edgeorch.Scenario.bundled('fig5-dependencies').cluster()
cluster.register(svc)
assert cluster.deploy('web') == ['web-0', 'web-1']
steps = cluster.schedule([('baseline', 1.0)])
assert [s[1] for s in steps] == ['assigned', 'assigned'], steps
assert steps[0][2] != steps[1][2]
try:
    cluster.schedule([('nonsense', 1.0)])
    raise AssertionError('unknown plugin accepted')
except ValueError:
    pass
res = edgeorch.Scenario.bundled('fig5-dependencies').run(reps=3)
assert res.placement_histogram('custom') == {'P2-A': 3}
",
            None,
            None,
        )
        .inspect_err(|e| e.print(py))
        .unwrap();
    });
}
