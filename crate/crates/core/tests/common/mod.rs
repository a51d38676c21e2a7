//! Shared fixtures for integration tests: a small three-class object
//! library with both gripper types.

use binpick_core::geom::Rotation;
use binpick_core::grasp::{GenParams, GripperSpec, ParallelJawSpec, SuctionSpec};
use binpick_core::library::{
    CodecOptions, DatasetOptions, LibraryConfig, ObjectEntry, ObjectLibrary,
};
use binpick_core::mesh::shapes;
use binpick_core::object::ObjectBuildOptions;
use binpick_core::oracle::OracleParams;
use binpick_core::scene::{default_bin, default_camera};
use binpick_core::symmetry::SymmetryClass;

/// Proper symmetry group of a box with three distinct side lengths:
/// identity plus half-turns about the three axes.
pub fn box_group() -> SymmetryClass {
    SymmetryClass::FiniteGroup {
        rotations: vec![
            Rotation::identity(),
            Rotation::rot_x(std::f64::consts::PI),
            Rotation::rot_y(std::f64::consts::PI),
            Rotation::rot_z(std::f64::consts::PI),
        ],
    }
}

pub fn demo_grippers() -> Vec<GripperSpec> {
    vec![
        GripperSpec::Suction(SuctionSpec {
            gripper_id: "cup4".into(),
            cup_radius: 0.004,
            perimeter_points: 16,
            max_pull_force: 20.0,
            max_shear_force: 10.0,
            max_peel_torque: 0.3,
            max_seal_deviation: 0.001,
            max_normal_cone: 20f64.to_radians(),
        }),
        GripperSpec::ParallelJaw(ParallelJawSpec {
            gripper_id: "pj30".into(),
            stroke: 0.03,
            jaw_depth: 0.01,
            jaw_width: 0.008,
            closing_force: 40.0,
        }),
    ]
}

/// Three classes covering a finite group, a rotoreflection-invariant
/// revolution object, and a hook-prone asymmetric part.
pub fn demo_library() -> ObjectLibrary {
    let config = LibraryConfig {
        camera: default_camera(),
        bin: default_bin(),
        oracle: OracleParams::default(),
        grasp_gen: GenParams::default(),
        codec: CodecOptions::default(),
        dataset: DatasetOptions {
            build: ObjectBuildOptions {
                lambda_samples: 4000,
                surface_samples: 400,
                seed: 0,
            },
            ..DatasetOptions::default()
        },
        grippers: demo_grippers(),
        objects: vec![],
    };
    let meshes = vec![
        (
            ObjectEntry {
                class_id: 0,
                name: "brick".into(),
                mesh: "brick.obj".into(),
                symmetry: box_group(),
                hook_like: false,
            },
            shapes::make_box(0.05, 0.03, 0.02),
        ),
        (
            ObjectEntry {
                class_id: 1,
                name: "pin".into(),
                mesh: "pin.obj".into(),
                symmetry: SymmetryClass::RevolutionRotoreflection,
                hook_like: false,
            },
            shapes::make_cylinder(0.012, 0.05, 48),
        ),
        (
            ObjectEntry {
                class_id: 2,
                name: "hook".into(),
                mesh: "hook.obj".into(),
                symmetry: SymmetryClass::NonSymmetric,
                hook_like: true,
            },
            shapes::make_l_bracket(0.05, 0.016, 0.008),
        ),
    ];
    ObjectLibrary::from_parts(config, meshes).expect("demo library builds")
}
