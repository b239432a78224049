#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <sobolevlab/experiments.hpp>

namespace fs = std::filesystem;
using namespace sobolevlab;

namespace {

struct Settings {
    int dim = 0;
    int level = -1;
    int max_level = -1;
    std::vector<double> p;
    double tol = SolverOptions{}.grad_tol;
    int max_iters = SolverOptions{}.max_iters;
    std::uint64_t seed = 20240611;
    int jobs = 1;
    bool no_nearest = false;
    std::string out;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// key = value lines; '#' starts a comment
std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error(path + ":" + std::to_string(n) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(trim(item)));
    return out;
}

void apply_config(const std::map<std::string, std::string>& kv, Settings& s) {
    for (const auto& [k, v] : kv) {
        if (k == "dim") s.dim = std::stoi(v);
        else if (k == "level") s.level = std::stoi(v);
        else if (k == "max-level") s.max_level = std::stoi(v);
        else if (k == "p") s.p = parse_list(v);
        else if (k == "tol") s.tol = std::stod(v);
        else if (k == "max-iters") s.max_iters = std::stoi(v);
        else if (k == "seed") s.seed = std::stoull(v);
        else if (k == "jobs") s.jobs = std::stoi(v);
        else if (k == "no-nearest") s.no_nearest = v == "1" || v == "true";
        else if (k == "out") s.out = v;
        else throw std::runtime_error("unknown config key: " + k);
    }
}

// Flags override the file, so the file is applied to the bound variables first.
void preload_config(int argc, char** argv, Settings& s) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) apply_config(read_config(argv[i + 1]), s);
        else if (a.rfind("--config=", 0) == 0) apply_config(read_config(a.substr(9)), s);
    }
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw CLI::ValidationError(msg);
}

double single_p(const Settings& s) {
    require(s.p.size() == 1, "--p: exactly one value expected");
    return s.p.front();
}

template <int Dim>
void cmd_mesh(const Settings& s) {
    const auto mesh = make_ball_mesh<Dim>(s.level);
    if (const auto parent = fs::path(s.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    save_mesh(s.out, *mesh);
    const MeshMetrics m = mesh_metrics(*mesh);
    std::cout << "vertices " << mesh->num_vertices() << "\nelements " << mesh->num_elements() << "\nh " << m.h
              << "\nsigma " << m.sigma << "\nq0 " << m.q0 << '\n';
}

template <int Dim>
int cmd_solve(const Settings& s) {
    const double p = single_p(s);
    SolverOptions opts;
    opts.grad_tol = s.tol;
    opts.max_iters = s.max_iters;
    opts.seed = s.seed;
    const auto mesh = make_ball_mesh<Dim>(s.level);
    const SolveResult<Dim> r = solve_sh<Dim>(mesh, p, opts);
    const double S = sobolev_constant_ref(p, Dim);

    const fs::path dir(s.out);
    fs::create_directories(dir);
    save_mesh((dir / "mesh.txt").string(), *mesh);
    save_function((dir / "u_h.txt").string(), r.u_h);
    std::ofstream rec(dir / "solve.txt");
    if (!rec) throw std::runtime_error("cannot write " + (dir / "solve.txt").string());
    std::ostringstream os;
    os << std::setprecision(17) << "dim = " << Dim << "\np = " << p << "\nlevel = " << s.level
       << "\nh = " << mesh->h() << "\nS_h = " << r.S_h << "\nS_ref = " << S << "\ngap = " << r.S_h - S
       << "\nwitness = " << r.witness_quotient << "\nlambda_star = " << r.lambda_star
       << "\niterations = " << r.iterations << "\nconverged = " << (r.converged ? "true" : "false")
       << "\nprojected_gradient = " << r.projected_gradient
       << "\nused_restart = " << (r.used_restart ? "true" : "false")
       << "\nreturned_witness = " << (r.returned_witness ? "true" : "false")
       << "\nlpstar_order = " << r.lpstar_check.order
       << "\nlpstar_relative_change = " << r.lpstar_check.relative_change << '\n';
    rec << os.str();
    std::cout << os.str();
    return r.converged ? 0 : 2;
}

template <int Dim>
int cmd_rates(const Settings& s) {
    require(!s.p.empty(), "--p is required");
    require(s.max_level >= 3, "--max-level must be at least 3");
    ConvergenceOptions opts;
    opts.solver.grad_tol = s.tol;
    opts.solver.max_iters = s.max_iters;
    opts.solver.seed = s.seed;
    opts.nearest = !s.no_nearest;

    const fs::path dir(s.out);
    auto run_one = [&](double p) {
        ConvergenceReport rep = run_convergence<Dim>(p, s.max_level, opts);
        std::ostringstream tag;
        tag << "p" << p;
        save_convergence(s.p.size() == 1 ? dir : dir / tag.str(), rep);
        return rep;
    };

    std::vector<ConvergenceReport> reports;
    const std::size_t jobs = static_cast<std::size_t>(std::max(1, s.jobs));
    for (std::size_t i = 0; i < s.p.size(); i += jobs) {
        std::vector<std::future<ConvergenceReport>> batch;
        for (std::size_t k = i; k < std::min(s.p.size(), i + jobs); ++k)
            batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_one, s.p[k]));
        for (auto& f : batch) reports.push_back(f.get());
    }

    bool all = true;
    for (const auto& rep : reports) {
        write_convergence_csv(std::cout, rep);
        std::cout << convergence_summary(rep).dump(2) << '\n';
        all = all && !rep.inconclusive && rep.rate_pass && rep.witness_bound_pass && rep.gaps_positive;
    }
    return all ? 0 : 1;
}

template <int Dim>
int cmd_lemmas(const Settings& s) {
    const double p = single_p(s);
    const auto reports = run_lemma_suite<Dim>(p, s.seed);
    const fs::path dir(s.out);
    fs::create_directories(dir);
    save_check_csv((dir / "lemmas.csv").string(), reports);
    int failed = 0;
    for (const auto& r : reports) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << '\n';
        failed += r.passed ? 0 : 1;
    }
    std::cout << reports.size() - static_cast<std::size_t>(failed) << '/' << reports.size() << " checks passed\n";
    return failed == 0 ? 0 : 1;
}

template <typename F2, typename F3>
int dispatch(int dim, F2 f2, F3 f3) {
    require(dim == 2 || dim == 3, "--dim must be 2 or 3");
    return dim == 2 ? f2() : f3();
}

}  // namespace

int main(int argc, char** argv) {
    Settings s;
    CLI::App app{"Discrete Sobolev constants on P1 finite element spaces"};
    app.require_subcommand(1);
    std::string config;
    app.add_option("--config", config, "key = value file preloading any flag");

    try {
        preload_config(argc, argv, s);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    auto* mesh = app.add_subcommand("mesh", "write the level-L mesh of the unit ball");
    auto* solve = app.add_subcommand("solve", "compute S_h on one level");
    auto* rates = app.add_subcommand("rates", "convergence sweep and rate fit");
    auto* lemmas = app.add_subcommand("lemmas", "run the lemma check suite");
    for (auto* sc : {mesh, solve, rates, lemmas}) {
        sc->add_option("--dim", s.dim, "space dimension (2 or 3)");
        sc->add_option("--out", s.out, sc == mesh ? "output file" : "output directory");
        sc->add_option("--config", config, "key = value file preloading any flag");
    }
    for (auto* sc : {mesh, solve}) sc->add_option("--level", s.level, "refinement level")->check(CLI::NonNegativeNumber);
    for (auto* sc : {solve, rates, lemmas}) {
        sc->add_option("--p", s.p, "exponent p (rates accepts a comma separated list)")->delimiter(',');
        sc->add_option("--seed", s.seed, "random seed");
    }
    for (auto* sc : {solve, rates}) {
        sc->add_option("--tol", s.tol, "projected gradient tolerance")->check(CLI::PositiveNumber);
        sc->add_option("--max-iters", s.max_iters, "iteration cap per regularization stage")->check(CLI::PositiveNumber);
    }
    rates->add_option("--max-level", s.max_level, "finest level");
    rates->add_option("--jobs", s.jobs, "concurrent (p, N) sweeps")->check(CLI::PositiveNumber);
    rates->add_flag("--no-nearest", s.no_nearest, "skip the nearest-extremal fit per level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        require(!s.out.empty(), "--out is required");
        if (*mesh) {
            require(s.level >= 0, "--level is required");
            return dispatch(s.dim, [&] { cmd_mesh<2>(s); return 0; }, [&] { cmd_mesh<3>(s); return 0; });
        }
        if (*solve) {
            require(s.level >= 0, "--level is required");
            return dispatch(s.dim, [&] { return cmd_solve<2>(s); }, [&] { return cmd_solve<3>(s); });
        }
        if (*rates) return dispatch(s.dim, [&] { return cmd_rates<2>(s); }, [&] { return cmd_rates<3>(s); });
        if (*lemmas) return dispatch(s.dim, [&] { return cmd_lemmas<2>(s); }, [&] { return cmd_lemmas<3>(s); });
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
