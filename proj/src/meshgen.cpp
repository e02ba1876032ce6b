#include "defo/meshgen.hpp"

#include <algorithm>
#include <map>

namespace defo::tetmesh {

TetMesh make_single_tet(double scale) {
    std::vector<Vec3> v = {
        {0, 0, 0}, {scale, 0, 0}, {0, scale, 0}, {0, 0, scale}};
    return TetMesh::build(std::move(v), {{0, 1, 2, 3}});
}

TetMesh make_two_tets(double scale) {
    std::vector<Vec3> v = {
        {0, 0, 0}, {scale, 0, 0}, {0, scale, 0}, {0, 0, scale}, {scale, scale, scale}};
    return TetMesh::build(std::move(v), {{0, 1, 2, 3}, {1, 2, 3, 4}});
}

TetMesh make_from_voxels(const std::vector<Voxel>& cells, double cell_size, const Vec3& origin) {
    std::map<std::array<int, 3>, int> node_ids;
    std::vector<Vec3> vertices;
    auto node = [&](int x, int y, int z) {
        auto [it, inserted] = node_ids.try_emplace({x, y, z}, static_cast<int>(vertices.size()));
        if (inserted)
            vertices.push_back(origin + cell_size * Vec3(x, y, z));
        return it->second;
    };

    // six tets per cell, all containing the main diagonal c000 -> c111
    static constexpr int kOrders[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                          {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    std::vector<std::array<int, 4>> tets;
    for (const auto& c : cells) {
        for (const auto& ord : kOrders) {
            std::array<int, 4> tet;
            int p[3] = {c.x, c.y, c.z};
            tet[0] = node(p[0], p[1], p[2]);
            for (int k = 0; k < 3; ++k) {
                p[ord[k]] += 1;
                tet[k + 1] = node(p[0], p[1], p[2]);
            }
            tets.push_back(tet);
        }
    }
    return TetMesh::build(std::move(vertices), std::move(tets));
}

TetMesh make_box(int nx, int ny, int nz, double cell_size) {
    std::vector<Voxel> cells;
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y)
            for (int z = 0; z < nz; ++z) cells.push_back({x, y, z});
    return make_from_voxels(cells, cell_size);
}

TetMesh make_lshape(int arm, int width, double cell_size) {
    std::vector<Voxel> cells;
    for (int x = 0; x < arm; ++x)
        for (int y = 0; y < width; ++y) cells.push_back({x, y, 0});
    for (int y = width; y < arm; ++y)
        for (int x = 0; x < width; ++x) cells.push_back({x, y, 0});
    return make_from_voxels(cells, cell_size);
}

TetMesh make_snake(int nx, double cell_size) {
    std::vector<Voxel> cells;
    for (int x = 0; x < nx; ++x) cells.push_back({x, 0, 0});
    return make_from_voxels(cells, cell_size);
}

TetMesh make_folded_chain(int arm, int gap_rows, double cell_size) {
    std::vector<Voxel> cells;
    int far_x = arm - 1;
    int top_y = gap_rows + 1;
    for (int x = 0; x < arm; ++x) cells.push_back({x, 0, 0});
    for (int y = 1; y <= gap_rows; ++y) cells.push_back({far_x, y, 0});
    for (int x = arm - 1; x >= 0; --x) cells.push_back({x, top_y, 0});
    return make_from_voxels(cells, cell_size);
}

TetMesh make_star(int limb, double cell_size) {
    std::vector<Voxel> cells;
    // 2x2 core at the origin
    for (int x = -1; x <= 0; ++x)
        for (int y = -1; y <= 0; ++y) cells.push_back({x, y, 0});
    for (int k = 1; k <= limb; ++k) {
        cells.push_back({k, -1, 0});
        cells.push_back({k, 0, 0});
        cells.push_back({-1 - k, -1, 0});
        cells.push_back({-1 - k, 0, 0});
        cells.push_back({-1, k, 0});
        cells.push_back({0, k, 0});
        cells.push_back({-1, -1 - k, 0});
        cells.push_back({0, -1 - k, 0});
    }
    return make_from_voxels(cells, cell_size);
}

TetMesh make_named_shape(const std::string& name) {
    if (name == "box") return make_box();
    if (name == "lshape") return make_lshape();
    if (name == "snake") return make_snake();
    if (name == "folded_chain") return make_folded_chain();
    if (name == "toy") return make_star();
    std::string known;
    for (const auto& n : named_shapes()) known += " " + n;
    throw ValidationError("unknown shape '" + name + "'; known shapes:" + known);
}

std::vector<std::string> named_shapes() {
    return {"box", "lshape", "snake", "folded_chain", "toy"};
}

}  // namespace defo::tetmesh
