//! Scenario files bundled into the binary.

/// `(name, toml)` for every bundled scenario.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "fig3_filter_regulation",
        include_str!("../../presets/fig3_filter_regulation.toml"),
    ),
    (
        "fig6_observer_regulation",
        include_str!("../../presets/fig6_observer_regulation.toml"),
    ),
    (
        "fig9_observer_tracking",
        include_str!("../../presets/fig9_observer_tracking.toml"),
    ),
    (
        "fig12_joint_direct",
        include_str!("../../presets/fig12_joint_direct.toml"),
    ),
    (
        "fig15_composite",
        include_str!("../../presets/fig15_composite.toml"),
    ),
    (
        "fig18_flexible",
        include_str!("../../presets/fig18_flexible.toml"),
    ),
    (
        "fig19_reduced_stiffness",
        include_str!("../../presets/fig19_reduced_stiffness.toml"),
    ),
    (
        "fig20_high_stiffness",
        include_str!("../../presets/fig20_high_stiffness.toml"),
    ),
    (
        "fig21_pid_inner",
        include_str!("../../presets/fig21_pid_inner.toml"),
    ),
    (
        "fig24_cartesian_adaptive",
        include_str!("../../presets/fig24_cartesian_adaptive.toml"),
    ),
    (
        "fig25_cartesian_kinematic",
        include_str!("../../presets/fig25_cartesian_kinematic.toml"),
    ),
];

/// Source text of a bundled preset. Accepts the name with or without a
/// `.toml` suffix.
pub fn preset(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
