#pragma once

#include "hsi/geometry.hpp"

namespace hsi {

// Closed, outward-oriented (counter-clockwise seen from outside) meshes.

// Subdivided icosahedron; 10 * 4^s + 2 vertices.
TriMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

// Axis-aligned box with 8 shared corners and 12 triangles.
TriMesh make_box(const Vec3& min, const Vec3& max);

// Appends b to a, offsetting its face indices.
void append_mesh(TriMesh& a, const TriMesh& b);

} // namespace hsi
