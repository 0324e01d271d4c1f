//! Scenario builders shared by the benchmarks.

use pointer_sim_core::{load_scenario, Scenario};

/// Qubit coupled to an `n`-spin bath in transverse fields.
pub fn bath(qubits: usize, steps: usize) -> Scenario {
    let fields: Vec<String> = (0..qubits).map(|k| format!("{:.2}", 0.5 + 0.2 * k as f64)).collect();
    load_scenario(&format!(
        r#"
[system]
hamiltonian = [[1.0, 0.0], [0.0, -1.0]]
initial_state = [0.7071067811865476, 0.7071067811865476]
[environment]
kind = "qubit-bath"
qubits = {qubits}
fields = [{}]
couplings = 0.5
[interaction]
mode = "bath"
system_operator = [[1.0, 0.0], [0.0, -1.0]]
coupling = {{ kind = "constant", value = 0.2 }}
[time]
t_end = 10.0
steps = {steps}
"#,
        fields.join(", ")
    ))
    .expect("benchmark scenario is valid")
}

/// Pure-phase qubit with a trivial environment.
pub fn phase(t_end: f64, steps: usize) -> Scenario {
    load_scenario(&format!(
        r#"
[system]
hamiltonian = [[0.5, 0.0], [0.0, -0.5]]
initial_state = [0.7071067811865476, 0.7071067811865476]
[environment]
kind = "trivial"
[interaction]
mode = "phase"
system_operator = [[1.0, 0.0], [0.0, -1.0]]
coupling = {{ kind = "constant", value = 1.0 }}
[time]
t_end = {t_end:?}
steps = {steps}
"#
    ))
    .expect("benchmark scenario is valid")
}
