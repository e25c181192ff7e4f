#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sqfn/lab.hpp"

namespace {

using namespace sqfn;
namespace fs = std::filesystem;

RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json j;
    in >> j;
    return RunConfig::from_json(j);
}

void write_file(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path().empty()
                               ? "."
                               : fs::path(path).parent_path().string());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

void write_kernel(const std::string& out_dir, const std::string& stem, const Grid& g,
                  const KernelMatrix& km, const char* kind) {
    fs::create_directories(out_dir);
    const std::string bin = out_dir + "/" + stem + ".f64";
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + bin);
    // row-major float64
    for (Index x = 0; x < km.k.rows(); ++x)
        for (Index y = 0; y < km.k.cols(); ++y) {
            const double v = km.k(x, y);
            out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
    json side;
    side["kind"] = kind;
    side["t"] = km.t;
    side["grid"] = {{"d", g.dimension()},
                    {"half_width", g.half_width()},
                    {"points_per_axis", g.points_per_axis()}};
    if (km.subordination_mismatch > 0.0) side["subordination_mismatch"] = km.subordination_mismatch;
    write_file(out_dir + "/" + stem + ".json", side.dump(2) + "\n");
}

struct Session {
    Grid grid;
    PotentialProfile profile;

    explicit Session(const RunConfig& rc)
        : grid(rc.grid.d, rc.grid.half_width, rc.grid.points_per_axis),
          profile(make_potential(grid, rc.potential)) {}
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"square-function laboratory for Schrodinger operators"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    app.add_option("--config", config_path, "run configuration (JSON)");
    app.add_option("--out", out_dir, "output directory");

    double t_opt = 0.1;
    bool check_subordination = false;
    double q_opt = 2.0;
    std::string kind_opt = "L";
    std::string split_opt = "none";
    int n_triples = 10000;

    auto* rho_cmd = app.add_subcommand("rho", "critical-radius table (CSV)");
    auto* cov_cmd = app.add_subcommand("covering", "critical covering and overlap audit");
    auto* heat_cmd = app.add_subcommand("heat", "heat kernel matrix at time t");
    heat_cmd->add_option("--t", t_opt, "diffusion time")->required();
    auto* poi_cmd = app.add_subcommand("poisson", "subordinated Poisson kernel at time t");
    poi_cmd->add_option("--t", t_opt, "time")->required();
    poi_cmd->add_flag("--check-subordination", check_subordination,
                      "print the quadrature-vs-spectral mismatch");
    auto* g_cmd = app.add_subcommand("gfunc", "square function of a probe field (CSV)");
    g_cmd->add_option("--q", q_opt, "integrability exponent, >= 2");
    g_cmd->add_option("--kind", kind_opt, "semigroup: L or delta");
    g_cmd->add_option("--split", split_opt, "none | global | local");
    auto* bmo_cmd = app.add_subcommand("bmo", "BMO report for a probe field (CSV)");
    auto* atoms_cmd = app.add_subcommand("atoms", "generate and validate an atom set (JSON)");
    auto* thm_cmd = app.add_subcommand("theorem-a", "norm estimates over the surrogate list");
    auto* env_cmd = app.add_subcommand("envelopes", "heat-kernel envelope fits");
    env_cmd->add_option("--triples", n_triples, "sampled (x,y,t) triples");
    auto* run_cmd = app.add_subcommand("run", "full suite: theorem-a + envelopes + tables");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc = load_config(config_path);
        if (!out_dir.empty()) rc.out_dir = out_dir;

        if (rho_cmd->parsed() || cov_cmd->parsed()) {
            Session s(rc);
            s.profile.build_rho_table();
            if (rho_cmd->parsed()) {
                write_file(rc.out_dir + "/rho.csv", rho_table_csv(s.grid, s.profile));
                std::cout << "wrote " << rc.out_dir << "/rho.csv\n";
            } else {
                const auto cov = build_covering(s.profile);
                json j;
                j["balls"] = cov.balls.size();
                j["overlap_bound"] = cov.overlap_bound;
                j["covers_all_nodes"] = cov.covers_all_nodes;
                json centers = json::array();
                for (std::size_t k = 0; k < cov.centers.size(); ++k) {
                    json c;
                    c["node"] = cov.centers[k];
                    c["radius"] = cov.balls[k].radius;
                    centers.push_back(c);
                }
                j["centers"] = centers;
                write_file(rc.out_dir + "/covering.json", j.dump(2) + "\n");
                std::cout << "balls " << cov.balls.size() << ", overlap bound "
                          << cov.overlap_bound << ", coverage "
                          << (cov.covers_all_nodes ? "complete" : "INCOMPLETE") << "\n";
            }
            return 0;
        }

        if (heat_cmd->parsed() || poi_cmd->parsed()) {
            Session s(rc);
            auto dec = spectral_decompose(assemble_operator(s.profile));
            if (heat_cmd->parsed()) {
                write_kernel(rc.out_dir, "heat", s.grid, heat_kernel(dec, t_opt), "heat-L");
                std::cout << "wrote " << rc.out_dir << "/heat.f64\n";
            } else {
                auto km = poisson_subordinated(dec, t_opt);
                if (check_subordination)
                    std::cout << "subordination mismatch " << km.subordination_mismatch
                              << ", weight total " << subordination_weight_total(t_opt) << "\n";
                write_kernel(rc.out_dir, "poisson", s.grid, km, "poisson-L");
                std::cout << "wrote " << rc.out_dir << "/poisson.f64\n";
            }
            return 0;
        }

        if (g_cmd->parsed()) {
            Session s(rc);
            s.profile.build_rho_table();
            const bool laplacian = (kind_opt == "delta");
            PotentialProfile zero = PotentialProfile::constant(s.grid, 0.0, rc.potential.s);
            auto dec = spectral_decompose(assemble_operator(laplacian ? zero : s.profile));
            auto cfg = SquareFunctionConfig::make_for_spectrum(
                q_opt, dec, 1e-3, 40.0, rc.t_nodes,
                laplacian ? SemigroupKind::laplacian : SemigroupKind::schrodinger);
            const BanachSurrogate Xs(2.0, 1);
            auto probes = make_bmo_probes(dec, s.profile, Xs, 4, derive_seed(rc.seed, "gfunc"));
            const VectorField& f = probes[2];  // smooth bump probe
            if (split_opt == "none") {
                const Vector gv = g_function(cfg, f, dec);
                write_file(rc.out_dir + "/gfunc.csv", gfunc_csv(s.grid, gv, nullptr, nullptr));
            } else {
                const auto sp = g_split(cfg, f, dec, s.profile);
                write_file(rc.out_dir + "/gfunc.csv",
                           gfunc_csv(s.grid, sp.g, &sp.g_global, &sp.g_local));
            }
            std::cout << "wrote " << rc.out_dir << "/gfunc.csv\n";
            return 0;
        }

        if (bmo_cmd->parsed()) {
            Session s(rc);
            s.profile.build_rho_table();
            auto dec = spectral_decompose(assemble_operator(s.profile));
            const BanachSurrogate Xs(2.0, 1);
            auto fam = make_default_ball_family(s.grid, s.profile, rc.ball_ladder, rc.ball_stride);
            auto probes = make_bmo_probes(dec, s.profile, Xs, 4, derive_seed(rc.seed, "bmo"));
            std::vector<BmoRow> rows;
            const double norm = bmo_L_norm(s.grid, probes[0], fam, &rows);
            write_file(rc.out_dir + "/bmo.csv", bmo_rows_csv(rows));
            std::cout << "bmo norm " << norm << ", wrote " << rc.out_dir << "/bmo.csv\n";
            return 0;
        }

        if (atoms_cmd->parsed()) {
            Session s(rc);
            const BanachSurrogate Xs(2.0, std::max(1, rc.surrogates.front().n));
            auto atoms = make_atom_probes(s.grid, s.profile, Xs, rc.probes,
                                          derive_seed(rc.seed, "atoms"));
            fs::create_directories(rc.out_dir);
            json j = json::array();
            int id = 0;
            for (const auto& [field, atom] : atoms) {
                const std::string values_path = rc.out_dir + "/atom_" + std::to_string(id) + ".f64";
                std::ofstream out(values_path, std::ios::binary);
                for (Index x = 0; x < field.values.rows(); ++x)
                    for (Index c = 0; c < field.values.cols(); ++c) {
                        const double v = field.values(x, c);
                        out.write(reinterpret_cast<const char*>(&v), sizeof(double));
                    }
                json a;
                a["ball"] = {{"radius", atom.ball.radius}};
                json ctr = json::array();
                for (int k = 0; k < s.grid.dimension(); ++k) ctr.push_back(atom.ball.center[k]);
                a["ball"]["center"] = ctr;
                a["kind"] = atom.kind == AtomKind::small ? "small" : "big";
                a["values_path"] = values_path;
                a["valid"] = is_atom(s.grid, atom, s.profile);
                j.push_back(a);
                ++id;
            }
            write_file(rc.out_dir + "/atoms.json", j.dump(2) + "\n");
            std::cout << "wrote " << rc.out_dir << "/atoms.json\n";
            return 0;
        }

        if (thm_cmd->parsed() || run_cmd->parsed()) {
            auto bundle = run_theorem_a_suite(rc);
            if (run_cmd->parsed()) {
                Session s(rc);
                s.profile.build_rho_table();
                auto dec = spectral_decompose(assemble_operator(s.profile));
                const auto env =
                    fit_kernel_envelopes(dec, s.profile, n_triples, derive_seed(rc.seed, "env"));
                bundle.report["envelopes"] = env.to_json();
                bundle.tables["rho.csv"] = rho_table_csv(s.grid, s.profile);
            }
            emit_reports(bundle, rc.out_dir);
            std::cout << "wrote " << rc.out_dir << "/report.json\n";
            return 0;
        }

        if (env_cmd->parsed()) {
            Session s(rc);
            s.profile.build_rho_table();
            auto dec = spectral_decompose(assemble_operator(s.profile));
            const auto env =
                fit_kernel_envelopes(dec, s.profile, n_triples, derive_seed(rc.seed, "env"));
            json j;
            j["envelopes"] = env.to_json();
            write_file(rc.out_dir + "/envelopes.json", j.dump(2) + "\n");
            std::cout << "c_alpha " << env.c_alpha << ", holdout violations "
                      << env.holdout_violations << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
