#include "twoscale/coefficients.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

namespace twoscale {

void CoefficientTensor::check_sized() const {
    const size_t nc = static_cast<size_t>(cell_count());
    if (a1.size() != nc || a0.size() != nc)
        throw DimensionError("coefficient tensor has wrong cell count");
    for (const auto* part : {&a1, &a0})
        for (const auto& m : *part)
            if (m.rows() != flat_dim() || m.cols() != flat_dim())
                throw DimensionError("coefficient block has wrong size");
}

ValidityReport validate_symmetry(const CoefficientTensor& a) {
    a.check_sized();
    ValidityReport rep;
    rep.value = 0.0;
    for (int c = 0; c < a.cell_count(); ++c) {
        for (const auto* part : {&a.a1, &a.a0}) {
            const Eigen::MatrixXd& m = (*part)[c];
            const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
            if (asym > rep.value) {
                rep.value = asym;
                rep.worst_cell = c;
            }
        }
    }
    rep.pass = rep.value <= 1e-12;
    rep.detail = rep.pass ? "symmetric"
                          : "asymmetry " + std::to_string(rep.value) +
                                " at cell " + std::to_string(rep.worst_cell);
    return rep;
}

ValidityReport validate_nonnegativity(const CoefficientTensor& a) {
    a.check_sized();
    ValidityReport rep;
    rep.value = std::numeric_limits<double>::infinity();
    for (int c = 0; c < a.cell_count(); ++c) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            0.5 * (a.a1[c] + a.a1[c].transpose()),
            Eigen::EigenvaluesOnly);
        const double lam = es.eigenvalues().minCoeff();
        if (lam < rep.value) {
            rep.value = lam;
            rep.worst_cell = c;
        }
    }
    rep.pass = rep.value >= -1e-12;
    rep.detail = "min a1 eigenvalue " + std::to_string(rep.value);
    return rep;
}

namespace {

// Rank-one minimum over a fixed angular grid of directions.
double rank_one_min(const CoefficientTensor& a, int grid, int& worst_cell) {
    const double pi = std::numbers::pi;
    double best = std::numeric_limits<double>::infinity();
    const int nxi = (a.n == 1) ? 1 : grid;
    const int neta = (a.d == 1) ? 1 : grid;
    for (int c = 0; c < a.cell_count(); ++c) {
        const Eigen::MatrixXd m = a.sum_at(c);
        for (int p = 0; p < nxi; ++p) {
            Eigen::VectorXd xi(a.n);
            if (a.n == 1)
                xi[0] = 1.0;
            else {
                const double th = pi * p / nxi;
                xi[0] = std::cos(th);
                xi[1] = std::sin(th);
            }
            for (int q = 0; q < neta; ++q) {
                Eigen::VectorXd eta(a.d);
                if (a.d == 1)
                    eta[0] = 1.0;
                else {
                    const double th = pi * q / neta;
                    eta[0] = std::cos(th);
                    eta[1] = std::sin(th);
                }
                Eigen::VectorXd zeta(a.flat_dim());
                for (int i = 0; i < a.n; ++i)
                    for (int j = 0; j < a.d; ++j)
                        zeta[i * a.d + j] = xi[i] * eta[j];
                const double v = zeta.dot(m * zeta);
                if (v < best) {
                    best = v;
                    worst_cell = c;
                }
            }
        }
    }
    return best;
}

} // namespace

ValidityReport validate_strong_ellipticity(const CoefficientTensor& a,
                                           double nu) {
    a.check_sized();
    ValidityReport rep;
    int grid = 360;
    int worst = -1;
    double prev = rank_one_min(a, grid, worst);
    for (int round = 0; round < 4; ++round) {
        grid *= 2;
        const double cur = rank_one_min(a, grid, worst);
        const bool settled = std::abs(cur - prev) < 1e-6;
        prev = cur;
        if (settled) break;
    }
    rep.value = prev;
    rep.worst_cell = worst;
    rep.pass = rep.value >= nu;
    rep.detail = "worst rank-one value " + std::to_string(rep.value) +
                 " vs nu=" + std::to_string(nu);
    return rep;
}

namespace {

Eigen::MatrixXd scalar_block(int n, int d, double s) {
    return s * Eigen::MatrixXd::Identity(n * d, n * d);
}

} // namespace

ProblemGeometry preset_geometry(const std::string& tag, int d, int N, int n,
                                const GeometryParams& p) {
    if (d != 1 && d != 2)
        throw ConfigError("geometry dimension must be 1 or 2");
    if (N < 2) throw ConfigError("cell resolution N must be >= 2");
    ProblemGeometry g;
    CoefficientTensor& t = g.tensor;
    t.n = n;
    t.d = d;
    t.cells = {N, d == 2 ? N : 1};
    t.geometry_tag = tag;
    const int nc = t.cell_count();
    t.a1.assign(nc, scalar_block(n, d, 0.0));
    t.a0.assign(nc, scalar_block(n, d, 1.0));
    g.density.rho.assign(nc, p.rho);
    g.density.nu = std::min(p.rho, 1.0);

    if (tag == "uniform") {
        for (int c = 0; c < nc; ++c) t.a1[c] = scalar_block(n, d, p.value_a);
    } else if (tag == "laminate") {
        if (N % 2 != 0)
            throw ConfigError("laminate requires an even cell count");
        for (int c = 0; c < nc; ++c) {
            const int i = c % t.cells[0];
            const double v = (i < N / 2) ? p.value_a : p.value_b;
            t.a1[c] = scalar_block(n, d, v);
        }
    } else if (tag == "checkerboard") {
        if (d != 2) throw ConfigError("checkerboard requires d = 2");
        if (N % 2 != 0)
            throw ConfigError("checkerboard requires an even cell count");
        for (int c = 0; c < nc; ++c) {
            const int i = c % N, j = c / N;
            const int si = (2 * i) / N, sj = (2 * j) / N;
            const double v = ((si + sj) % 2 == 0) ? p.value_a : p.value_b;
            t.a1[c] = scalar_block(n, d, v);
        }
    } else if (tag == "double_porosity") {
        if (d != 2) throw ConfigError("double_porosity requires d = 2");
        const double w = p.inclusion_halfwidth;
        const double cells_w = w * N;
        if (std::abs(cells_w - std::round(cells_w)) > 1e-12)
            throw ConfigError(
                "double_porosity inclusion is not aligned with the mesh");
        const int kw = static_cast<int>(std::round(cells_w));
        if (kw < 1 || 2 * kw >= N || N % 2 != 0)
            throw ConfigError("double_porosity inclusion size out of range");
        const int lo = N / 2 - kw, hi = N / 2 + kw; // cells [lo, hi)
        for (int c = 0; c < nc; ++c) {
            const int i = c % N, j = c / N;
            const bool inside = i >= lo && i < hi && j >= lo && j < hi;
            t.a1[c] = inside ? scalar_block(n, d, 0.0)
                             : scalar_block(n, d, p.value_a);
        }
    } else if (tag == "custom_voxel") {
        const size_t block = static_cast<size_t>(t.flat_dim()) * t.flat_dim();
        if (p.voxel_a1.size() != block * nc || p.voxel_a0.size() != block * nc)
            throw ConfigError("custom_voxel payload has wrong length");
        for (int c = 0; c < nc; ++c) {
            for (int r = 0; r < t.flat_dim(); ++r)
                for (int s = 0; s < t.flat_dim(); ++s) {
                    t.a1[c](r, s) = p.voxel_a1[block * c + r * t.flat_dim() + s];
                    t.a0[c](r, s) = p.voxel_a0[block * c + r * t.flat_dim() + s];
                }
        }
        if (!p.voxel_rho.empty()) {
            if (p.voxel_rho.size() != static_cast<size_t>(nc))
                throw ConfigError("custom_voxel density has wrong length");
            g.density.rho = p.voxel_rho;
            double lo = std::numeric_limits<double>::infinity();
            for (double r : g.density.rho) lo = std::min(lo, r);
            if (!(lo > 0)) throw CoefficientError("density must be positive");
            g.density.nu = std::min(lo, 1.0);
        }
    } else {
        throw ConfigError("unknown geometry tag '" + tag + "'");
    }
    t.check_sized();
    return g;
}

std::uint64_t geometry_hash(const CoefficientTensor& a,
                            const DensityField& rho) {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a
    auto mix = [&h](const char* buf, size_t len) {
        for (size_t i = 0; i < len; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    };
    auto mix_double = [&](double v) {
        char buf[40];
        const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
        mix(buf, static_cast<size_t>(len));
    };
    mix_double(a.n);
    mix_double(a.d);
    mix_double(a.cells[0]);
    mix_double(a.cells[1]);
    for (const auto* part : {&a.a1, &a.a0})
        for (const auto& m : *part)
            for (int r = 0; r < m.rows(); ++r)
                for (int c = 0; c < m.cols(); ++c) mix_double(m(r, c));
    for (double v : rho.rho) mix_double(v);
    mix_double(rho.nu);
    return h;
}

double ForcingSpec::macro_value(const Eigen::VectorXd& x,
                                const Box& box) const {
    if (macro == MacroKind::Constant) return amplitude;
    double v = amplitude;
    for (int k = 0; k < x.size(); ++k)
        v *= std::sin(std::numbers::pi * (x[k] - box.lo[k]) / box.length(k));
    return v;
}

double ForcingSpec::cell_value(const Eigen::VectorXd& y) const {
    if (cell == CellKind::Constant) return 1.0;
    return 1.0 + cell_beta * std::cos(2.0 * std::numbers::pi * y[0]);
}

Eigen::VectorXd ForcingSpec::at_two_scale(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& y,
                                          const Box& box, int n) const {
    return macro_value(x, box) * cell_value(y) * Eigen::VectorXd::Ones(n);
}

Eigen::VectorXd ForcingSpec::at_eps(const Eigen::VectorXd& x, double eps,
                                    const Box& box, int n) const {
    Eigen::VectorXd y = x / eps;
    for (int k = 0; k < y.size(); ++k) y[k] -= std::floor(y[k]);
    return at_two_scale(x, y, box, n);
}

namespace {

ForcingSpec::MacroKind parse_macro_kind(const std::string& s) {
    if (s == "sin" || s == "sine") return ForcingSpec::MacroKind::SineProduct;
    if (s == "constant") return ForcingSpec::MacroKind::Constant;
    throw ConfigError("unknown macro forcing kind '" + s + "'");
}

ForcingSpec::CellKind parse_cell_kind(const std::string& s) {
    if (s == "constant") return ForcingSpec::CellKind::Constant;
    if (s == "cosine") return ForcingSpec::CellKind::Cosine;
    throw ConfigError("unknown cell forcing kind '" + s + "'");
}

} // namespace

ProblemConfig ProblemConfig::from_json(const nlohmann::json& doc) {
    ProblemConfig c;
    try {
        if (doc.value("schema_version", 1) != 1)
            throw ConfigError("unsupported schema_version");
        c.d = doc.value("dimension", 1);
        c.n = doc.value("system_size", 1);
        c.cell_N = doc.value("cell_resolution", 2);
        c.macro_M = doc.value("macro_resolution", 16);
        c.fine_multiplier = doc.value("fine_multiplier", 1);
        c.lambda = doc.value("lambda", 1.0);
        c.nu = doc.value("nu", 1.0);
        if (doc.contains("epsilons"))
            c.epsilons = doc.at("epsilons").get<std::vector<double>>();
        if (doc.contains("kernel_refinements"))
            c.kernel_refinements =
                doc.at("kernel_refinements").get<std::vector<int>>();
        c.domain = Box::unit(c.d);
        if (doc.contains("domain")) {
            const auto& dom = doc.at("domain");
            const auto lo = dom.at("lo").get<std::vector<double>>();
            const auto hi = dom.at("hi").get<std::vector<double>>();
            if (static_cast<int>(lo.size()) != c.d ||
                static_cast<int>(hi.size()) != c.d)
                throw ConfigError("domain box has wrong dimension");
            for (int k = 0; k < c.d; ++k) {
                c.domain.lo[k] = lo[k];
                c.domain.hi[k] = hi[k];
            }
        }
        if (doc.contains("geometry")) {
            const auto& geo = doc.at("geometry");
            c.geometry_tag = geo.value("tag", "uniform");
            c.geometry.value_a = geo.value("value_a", 1.0);
            c.geometry.value_b = geo.value("value_b", 2.0);
            c.geometry.inclusion_halfwidth =
                geo.value("inclusion_halfwidth", 0.25);
            c.geometry.rho = geo.value("rho", 1.0);
            if (geo.contains("voxel_a1"))
                c.geometry.voxel_a1 =
                    geo.at("voxel_a1").get<std::vector<double>>();
            if (geo.contains("voxel_a0"))
                c.geometry.voxel_a0 =
                    geo.at("voxel_a0").get<std::vector<double>>();
            if (geo.contains("voxel_rho"))
                c.geometry.voxel_rho =
                    geo.at("voxel_rho").get<std::vector<double>>();
        }
        if (doc.contains("forcing")) {
            const auto& f = doc.at("forcing");
            c.forcing.macro = parse_macro_kind(f.value("macro", "sin"));
            c.forcing.cell = parse_cell_kind(f.value("cell", "constant"));
            c.forcing.amplitude = f.value("amplitude", 1.0);
            c.forcing.cell_beta = f.value("cell_beta", 0.0);
        }
        if (doc.contains("tolerances")) {
            const auto& t = doc.at("tolerances");
            c.tol.tol_sym = t.value("tol_sym", c.tol.tol_sym);
            c.tol.tol_kernel = t.value("tol_kernel", c.tol.tol_kernel);
            c.tol.cg_rel = t.value("cg_rel", c.tol.cg_rel);
            c.tol.weyl_rel = t.value("weyl_rel", c.tol.weyl_rel);
            c.tol.solvability_rel =
                t.value("solvability_rel", c.tol.solvability_rel);
        }
        c.seed = doc.value("seed", 1234u);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json ProblemConfig::to_json() const {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    doc["dimension"] = d;
    doc["system_size"] = n;
    doc["cell_resolution"] = cell_N;
    doc["macro_resolution"] = macro_M;
    doc["fine_multiplier"] = fine_multiplier;
    doc["lambda"] = lambda;
    doc["nu"] = nu;
    doc["epsilons"] = epsilons;
    if (!kernel_refinements.empty())
        doc["kernel_refinements"] = kernel_refinements;
    doc["domain"] = {{"lo", std::vector<double>(domain.lo.begin(),
                                                domain.lo.begin() + d)},
                     {"hi", std::vector<double>(domain.hi.begin(),
                                                domain.hi.begin() + d)}};
    nlohmann::json geo;
    geo["tag"] = geometry_tag;
    geo["value_a"] = geometry.value_a;
    geo["value_b"] = geometry.value_b;
    geo["inclusion_halfwidth"] = geometry.inclusion_halfwidth;
    geo["rho"] = geometry.rho;
    doc["geometry"] = geo;
    nlohmann::json f;
    f["macro"] =
        forcing.macro == ForcingSpec::MacroKind::SineProduct ? "sin"
                                                             : "constant";
    f["cell"] =
        forcing.cell == ForcingSpec::CellKind::Constant ? "constant" : "cosine";
    f["amplitude"] = forcing.amplitude;
    f["cell_beta"] = forcing.cell_beta;
    doc["forcing"] = f;
    doc["seed"] = seed;
    return doc;
}

void ProblemConfig::validate() const {
    if (d != 1 && d != 2) throw ConfigError("dimension must be 1 or 2");
    if (n < 1) throw ConfigError("system_size must be >= 1");
    if (cell_N < 2) throw ConfigError("cell_resolution must be >= 2");
    if (macro_M < 2) throw ConfigError("macro_resolution must be >= 2");
    if (fine_multiplier < 1) throw ConfigError("fine_multiplier must be >= 1");
    if (!(lambda > 0)) throw ConfigError("lambda must be positive");
    if (!(nu > 0)) throw ConfigError("nu must be positive");
    if (epsilons.empty()) throw ConfigError("epsilon list is empty");
    for (double e : epsilons)
        if (!(e > 0 && e < 1))
            throw ConfigError("epsilon values must lie in (0,1)");
    if (!domain.nondegenerate() || domain.d != d)
        throw ConfigError("domain box is degenerate");
}

} // namespace twoscale
