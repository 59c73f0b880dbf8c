//! Mesh a few domains and integrate the singular weight `|x|^{-2β}`.

use std::f64::consts::PI;

use tm_extremal::mesh::{build_mesh, build_mesh_with, DomainSpec, MeshOptions};
use tm_extremal::quadrature::SingularQuadrature;

fn main() -> tm_extremal::Result<()> {
    let domains = [
        ("unit disk", DomainSpec::unit_disk()),
        ("off-center disk", DomainSpec::disk_at([-0.3, 0.0], 1.0)),
        ("square", DomainSpec::square(1.0)),
        ("L-shape", DomainSpec::polygon(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 0.2], [0.2, 0.2], [0.2, 1.0], [-1.0, 1.0]])),
    ];
    for (name, spec) in &domains {
        let mesh = build_mesh(spec, 1.0 / 32.0)?;
        println!("{name:>16}: {} nodes, {} triangles, area {:.6}", mesh.n_nodes(), mesh.triangles.len(), mesh.area());
    }

    println!("\nweighted volume of the unit disk vs pi/(1-beta):");
    let mesh = build_mesh(&DomainSpec::unit_disk(), 1.0 / 64.0)?;
    for beta in [0.1, 0.25, 0.5, 0.75] {
        let vol: f64 = SingularQuadrature::new(beta)?.node_weights(&mesh).iter().sum();
        let exact = PI / (1.0 - beta);
        println!("  beta {beta:.2}: {vol:.8} (exact {exact:.8}, rel err {:.1e})", (vol / exact - 1.0).abs());
    }

    let graded = build_mesh_with(&DomainSpec::unit_disk(), &MeshOptions::graded(1.0 / 16.0, 1e-5, 1.2).with_snap_radii([0.01]))?;
    let r_min = graded.rings[0].scale;
    println!("\ngraded mesh: {} nodes, {} rings, innermost ring at r = {r_min:.1e}", graded.n_nodes(), graded.rings.len());
    Ok(())
}
