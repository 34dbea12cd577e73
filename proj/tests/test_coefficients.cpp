#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "twoscale/coefficients.hpp"

using namespace twoscale;

TEST_CASE("laminate preset alternates the two phase values") {
    GeometryParams p;
    p.value_a = 1.0;
    p.value_b = 2.0;
    const ProblemGeometry g = preset_geometry("laminate", 1, 4, 1, p);
    CHECK(g.tensor.cell_count() == 4);
    CHECK(g.tensor.a1[0](0, 0) == doctest::Approx(1.0));
    CHECK(g.tensor.a1[1](0, 0) == doctest::Approx(1.0));
    CHECK(g.tensor.a1[2](0, 0) == doctest::Approx(2.0));
    CHECK(g.tensor.a1[3](0, 0) == doctest::Approx(2.0));
    CHECK(validate_symmetry(g.tensor).pass);
    CHECK(validate_nonnegativity(g.tensor).pass);
    CHECK(validate_strong_ellipticity(g.tensor, 0.5).pass);
}

TEST_CASE("double porosity preset degenerates exactly on the inclusion") {
    GeometryParams p;
    p.inclusion_halfwidth = 0.25;
    const ProblemGeometry g = preset_geometry("double_porosity", 2, 8, 1, p);
    int degenerate = 0;
    for (int c = 0; c < g.tensor.cell_count(); ++c) {
        if (g.tensor.a1[c].cwiseAbs().maxCoeff() == 0.0) ++degenerate;
        // a0 keeps the full problem elliptic everywhere
        CHECK(g.tensor.a0[c](0, 0) > 0.0);
    }
    CHECK(degenerate == 16); // 4x4 inclusion cells out of 8x8
    CHECK(validate_nonnegativity(g.tensor).pass);
    CHECK(validate_strong_ellipticity(g.tensor, 0.5).pass);
}

TEST_CASE("misaligned inclusion width is rejected") {
    GeometryParams p;
    p.inclusion_halfwidth = 0.2; // 0.2*5 cells not integral on N=8
    CHECK_THROWS_AS(preset_geometry("double_porosity", 2, 8, 1, p),
                    ConfigError);
    CHECK_THROWS_AS(preset_geometry("no_such_geometry", 1, 4, 1, p),
                    ConfigError);
}

TEST_CASE("symmetry validator flags an asymmetric voxel tensor") {
    GeometryParams p;
    // d=1, n=2: blocks are 2x2; make a1 asymmetric in one cell.
    p.voxel_a1 = {1, 0, 0, 1, 1, 0.5, 0.2, 1};
    p.voxel_a0 = {1, 0, 0, 1, 1, 0, 0, 1};
    p.voxel_rho = {1, 1};
    const ProblemGeometry g = preset_geometry("custom_voxel", 1, 2, 2, p);
    const ValidityReport r = validate_symmetry(g.tensor);
    CHECK(!r.pass);
    CHECK(r.worst_cell == 1);
    CHECK(r.value == doctest::Approx(0.3));
}

TEST_CASE("ellipticity validator fails for an overclaimed bound") {
    GeometryParams p;
    p.value_a = 1.0;
    const ProblemGeometry g = preset_geometry("uniform", 1, 2, 1, p);
    CHECK(validate_strong_ellipticity(g.tensor, 1.0).pass);
    CHECK(!validate_strong_ellipticity(g.tensor, 3.0).pass);
}

TEST_CASE("geometry hash is stable and content-sensitive") {
    GeometryParams p;
    const ProblemGeometry g1 = preset_geometry("laminate", 1, 4, 1, p);
    const ProblemGeometry g2 = preset_geometry("laminate", 1, 4, 1, p);
    CHECK(geometry_hash(g1.tensor, g1.density) ==
          geometry_hash(g2.tensor, g2.density));
    GeometryParams q = p;
    q.value_b = 2.0000001;
    const ProblemGeometry g3 = preset_geometry("laminate", 1, 4, 1, q);
    CHECK(geometry_hash(g1.tensor, g1.density) !=
          geometry_hash(g3.tensor, g3.density));
}

TEST_CASE("separable forcing evaluates consistently") {
    ForcingSpec f;
    f.amplitude = 2.0;
    const Box box = Box::unit(1);
    Eigen::VectorXd x(1);
    x << 0.5;
    CHECK(f.macro_value(x, box) == doctest::Approx(2.0));
    f.cell = ForcingSpec::CellKind::Cosine;
    f.cell_beta = 0.5;
    Eigen::VectorXd y(1);
    y << 0.0;
    CHECK(f.cell_value(y) == doctest::Approx(1.5));
    // f^eps is the two-scale value along the diagonal y = x/eps mod 1
    const Eigen::VectorXd v = f.at_eps(x, 0.25, box, 1);
    CHECK(v[0] == doctest::Approx(f.macro_value(x, box) *
                                  f.cell_value((x / 0.25).eval())));
}

TEST_CASE("config JSON round trip") {
    ProblemConfig c;
    c.d = 2;
    c.domain = Box::unit(2);
    c.n = 1;
    c.cell_N = 8;
    c.macro_M = 16;
    c.lambda = 1.5;
    c.geometry_tag = "double_porosity";
    c.epsilons = {0.25, 0.125};
    const nlohmann::json doc = c.to_json();
    const ProblemConfig back = ProblemConfig::from_json(doc);
    CHECK(back.d == 2);
    CHECK(back.cell_N == 8);
    CHECK(back.lambda == doctest::Approx(1.5));
    CHECK(back.geometry_tag == "double_porosity");
    CHECK(back.epsilons.size() == 2);
    CHECK(back.to_json() == doc);
}

TEST_CASE("config validation rejects nonpositive lambda") {
    ProblemConfig c;
    c.lambda = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.lambda = 1.0;
    CHECK_NOTHROW(c.validate());
    c.epsilons = {1.5}; // outside (0,1)
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
