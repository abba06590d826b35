use serde::Serialize;

/// Documentation of one operation's effect on vertices, faces and constraints.
#[derive(Debug, Clone, Serialize)]
pub struct OpInfo {
    pub name: &'static str,
    pub signature: &'static str,
    pub vertices: &'static str,
    pub faces: &'static str,
    pub constraints: &'static str,
}

const CATALOG: &[OpInfo] = &[
    OpInfo {
        name: "box",
        signature: "solid NAME = box(w, h, d)",
        vertices: "8 vertices centered at the origin. Vertex k has x = +w/2 if bit 0 of k is set (else -w/2), \
                   y = +h/2 if bit 1 is set, z = +d/2 if bit 2 is set.",
        faces: "6 quads, outward and counter-clockwise: 0 = -x [0,4,6,2], 1 = +x [1,3,7,5], 2 = -y [0,1,5,4], \
                3 = +y [2,6,7,3], 4 = -z [0,2,3,1], 5 = +z [4,5,7,6].",
        constraints: "none",
    },
    OpInfo {
        name: "cylinder",
        signature: "solid NAME = cylinder(r, h, n)",
        vertices: "2n vertices in two rings; ring k (0 at z = -h/2, 1 at z = +h/2) vertex j has index k*n + j and \
                   angle 2*pi*j/n: (r cos, r sin). n must be an integer constant >= 3.",
        faces: "face 0 = bottom n-gon (reversed ring 0), face 1 = top n-gon (ring 1), faces 2+j = side quad \
                [j, j+1, n+j+1, n+j] (indices mod n within each ring).",
        constraints: "none",
    },
    OpInfo {
        name: "rect",
        signature: "solid NAME = rect(w, h)",
        vertices: "4 vertices in the z = 0 plane: 0 = (-w/2,-h/2), 1 = (+w/2,-h/2), 2 = (+w/2,+h/2), 3 = (-w/2,+h/2).",
        faces: "face 0 = the ring (normal +z), face 1 = the reversed ring (normal -z). A rect is a planar profile \
                until it is extruded.",
        constraints: "none",
    },
    OpInfo {
        name: "translate",
        signature: "translate(TARGET, dx, dy, dz)",
        vertices: "adds the offset to every selected vertex; TARGET is a solid or NAME[i, a..b] (half-open ranges).",
        faces: "unchanged",
        constraints: "none",
    },
    OpInfo {
        name: "rotate",
        signature: "rotate(TARGET, x|y|z, angle)",
        vertices: "right-handed rotation about the given axis through the origin; angle in radians. The two \
                   coordinates orthogonal to the axis are replaced by cos/sin combinations.",
        faces: "unchanged",
        constraints: "none",
    },
    OpInfo {
        name: "scale",
        signature: "scale(TARGET, s) | scale(TARGET, sx, sy, sz)",
        vertices: "multiplies selected coordinates about the origin.",
        faces: "unchanged",
        constraints: "none",
    },
    OpInfo {
        name: "extrude",
        signature: "extrude(NAME, face, length)",
        vertices: "appends one new vertex per face vertex, offset by length along the unit face normal, in the \
                   face's vertex order.",
        faces: "the extruded face is replaced in place by the cap; one side quad [a_i, a_i+1, b_i+1, b_i] per face \
                edge is appended.",
        constraints: "length - epsilon >= 0",
    },
    OpInfo {
        name: "chamfer",
        signature: "chamfer(NAME, corner, radius)",
        vertices: "profile corner c is removed and replaced, at the same position in the vertex list, by two \
                   vertices at distance radius from c along the preceding and following edges. Later vertex \
                   indices shift up by one.",
        faces: "the profile's two faces are rebuilt from the new ring.",
        constraints: "preceding edge length - radius >= 0; following edge length - radius >= 0; radius - epsilon >= 0",
    },
    OpInfo {
        name: "clamp",
        signature: "clamp(lo, expr, hi)",
        vertices: "none",
        faces: "none",
        constraints: "expr - lo >= 0; hi - expr >= 0. lo must be below hi at the initial parameters.",
    },
    OpInfo {
        name: "for",
        signature: "for i in a..b { ... }",
        vertices: "the body runs once per integer in [a, b); bounds are integer constants, so every iteration \
                   contributes a fixed number of vertices.",
        faces: "as the body",
        constraints: "as the body",
    },
];

pub fn op_catalog() -> &'static [OpInfo] {
    CATALOG
}
