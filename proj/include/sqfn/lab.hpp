#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqfn/grid.hpp"
#include "sqfn/potential.hpp"
#include "sqfn/semigroup.hpp"
#include "sqfn/spaces.hpp"
#include "sqfn/squarefn.hpp"

namespace sqfn {

using json = nlohmann::ordered_json;

struct GridSpec {
    int d = 3;
    double half_width = 0.9;
    int points_per_axis = 16;
};

struct PotentialSpec {
    std::string kind = "constant";  // constant | power | table
    double c = 1.0;
    double beta = 2.0;
    double s = 3.0;
    std::string table_path;
};

struct SurrogateSpec {
    double r = 2.0;  // infinity encoded as "inf" in JSON
    int n = 1;
};

struct RunConfig {
    GridSpec grid;
    PotentialSpec potential;
    double q = 2.0;
    int t_nodes = 64;
    double alpha = 1.0;
    std::vector<SurrogateSpec> surrogates = {{2.0, 1}, {2.0, 2}, {2.0, 4}, {2.0, 8}};
    int ball_ladder = 16;
    int ball_stride = 4;
    int probes = 32;
    std::uint64_t seed = 1;
    int alt_points_per_axis = 0;  // 0 disables the second-resolution pass
    int ledger_points_per_axis = 12;
    std::string out_dir = "out";

    static RunConfig from_json(const json& j);
    json to_json() const;
};

PotentialProfile make_potential(const Grid& g, const PotentialSpec& spec);

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag);

struct NormReport {
    std::string op;
    std::string domain;
    std::string codomain;
    double estimate = 0.0;
    int probes = 0;
    int argmax_probe = -1;
    int skipped = 0;
    std::vector<double> ratios;  // per probe; the estimate is their maximum
    json to_json(bool with_ratios = true) const;
};

// max over probes of out_norm(apply(f)) / in_norm(f); probes with vanishing
// input norm are skipped and logged.
NormReport estimate_operator_norm(const std::function<Vector(const VectorField&)>& apply,
                                  const std::function<double(const VectorField&)>& in_norm,
                                  const std::function<double(const Vector&)>& out_norm,
                                  const std::vector<VectorField>& probes);

// Probe construction. All probes are deterministic per seed; the fields used
// for cross-resolution comparisons are defined by physical-coordinate recipes
// so they exist on every grid.
std::vector<VectorField> make_lp_probes(const SpectralDecomposition& dec,
                                        const PotentialProfile& p, const BanachSurrogate& X,
                                        int count, std::uint64_t seed);
std::vector<std::pair<VectorField, Atom>> make_atom_probes(const Grid& g,
                                                           const PotentialProfile& p,
                                                           const BanachSurrogate& X, int count,
                                                           std::uint64_t seed);
std::vector<VectorField> make_bmo_probes(const SpectralDecomposition& dec,
                                         const PotentialProfile& p, const BanachSurrogate& X,
                                         int count, std::uint64_t seed);

struct ReportBundle {
    json report;
    std::map<std::string, std::string> tables;  // csv file name -> content
    std::string log;
};

// Norm reports for every surrogate and mapping, the localization ledger, and
// the finiteness audit.
ReportBundle run_theorem_a_suite(const RunConfig& cfg);

struct EnvelopeReport {
    double c_alpha = 0.0;           // heat-kernel Gaussian bound constant at the given alpha
    double alpha = 1.0;
    long long triples = 0;
    long long bound_violations = 0;  // against the fitted c_alpha
    std::vector<double> envelope_bins;  // difference envelope W over z = |x-y|/sqrt(t)
    double bin_width = 0.5;
    long long holdout_checked = 0;
    long long holdout_violations = 0;
    double closed_form_max_rel_err = -1.0;  // constant-potential confirmation; -1 when n/a
    json to_json() const;
};

EnvelopeReport fit_kernel_envelopes(const SpectralDecomposition& dec,
                                    const PotentialProfile& profile, int n_triples,
                                    std::uint64_t seed, double alpha = 1.0);

// Writes report.json, tables/*.csv and log.txt; byte-stable for a fixed
// bundle.
void emit_reports(const ReportBundle& bundle, const std::string& out_dir);

std::string rho_table_csv(const Grid& g, const PotentialProfile& p);
std::string gfunc_csv(const Grid& g, const Vector& gv, const Vector* glob, const Vector* loc);
std::string bmo_rows_csv(const std::vector<BmoRow>& rows);

}  // namespace sqfn
