"""Regenerate the unstructured unit-square fixtures (requires the gmsh Python API)."""
import gmsh

SIZES = ["0.125", "0.0625", "0.03125", "0.015625", "0.0078125"]


def generate(h: str) -> None:
    size = float(h)
    gmsh.initialize()
    gmsh.option.setNumber("General.Terminal", 0)
    gmsh.model.add("unit_square")
    pts = [gmsh.model.geo.addPoint(x, y, 0.0, size) for x, y in [(0, 0), (1, 0), (1, 1), (0, 1)]]
    lines = [gmsh.model.geo.addLine(pts[i], pts[(i + 1) % 4]) for i in range(4)]
    loop = gmsh.model.geo.addCurveLoop(lines)
    surf = gmsh.model.geo.addPlaneSurface([loop])
    gmsh.model.geo.synchronize()
    gmsh.model.addPhysicalGroup(1, lines, 1)
    gmsh.model.addPhysicalGroup(2, [surf], 1)
    gmsh.option.setNumber("Mesh.Algorithm", 5)
    gmsh.option.setNumber("Mesh.MshFileVersion", 2.2)
    gmsh.model.mesh.generate(2)
    gmsh.write(f"unit_square_unstructured_h{h}.msh")
    gmsh.finalize()


if __name__ == "__main__":
    for h in SIZES:
        generate(h)
