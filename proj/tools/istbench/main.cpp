// istbench: microbenchmark and audit harness for the concurrent
// interpolation search tree.
//
//   istbench run   --size N --threads P --update-ratio U --duration S ...
//   istbench audit --seed X [--ops N --key-range K]
//
// `run` prints one JSON object per trial on stdout (optionally a CSV file and
// a human-readable table); `audit` replays a seeded single-threaded workload
// against the sequential oracle and exits nonzero on any divergence or
// structural violation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ist/audit.hpp"
#include "ist/hooks.hpp"
#include "ist/oracle.hpp"
#include "ist/tree.hpp"
#include "ist/workload.hpp"

namespace {

nlohmann::json report_to_json(const ist::bench::TrialReport& r, std::uint32_t trial) {
    nlohmann::json j;
    j["trial"] = trial;
    j["throughput_ops_per_us"] = r.throughput_ops_per_us;
    j["lookups"] = r.lookups;
    j["inserts"] = r.inserts;
    j["deletes"] = r.deletes;
    j["insert_hits"] = r.insert_hits;
    j["delete_hits"] = r.delete_hits;
    j["avg_leaf_depth"] = r.avg_leaf_depth;
    j["max_leaf_depth"] = r.max_leaf_depth;
    j["node_count"] = r.node_count;
    j["empty_count"] = r.empty_count;
    j["footprint_bytes"] = r.footprint_bytes;
    j["overhead_ratio"] = r.overhead_ratio;
    j["root_rebuilds"] = r.root_rebuilds;
    j["wall_sec"] = r.wall_sec;
    j["final_keys"] = r.final_keys;
    j["audit_ok"] = r.audit_ok;
    if (!r.audit_ok) j["audit_error"] = r.audit_error;
    return j;
}

void write_csv(const std::string& path, const std::vector<ist::bench::TrialReport>& reps) {
    std::ofstream out(path);
    out << "trial,throughput_ops_per_us,lookups,inserts,deletes,insert_hits,delete_hits,"
           "avg_leaf_depth,max_leaf_depth,node_count,empty_count,footprint_bytes,"
           "overhead_ratio,root_rebuilds,wall_sec,final_keys,audit_ok\n";
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const auto& r = reps[i];
        out << i << ',' << r.throughput_ops_per_us << ',' << r.lookups << ',' << r.inserts
            << ',' << r.deletes << ',' << r.insert_hits << ',' << r.delete_hits << ','
            << r.avg_leaf_depth << ',' << r.max_leaf_depth << ',' << r.node_count << ','
            << r.empty_count << ',' << r.footprint_bytes << ',' << r.overhead_ratio << ','
            << r.root_rebuilds << ',' << r.wall_sec << ',' << r.final_keys << ','
            << (r.audit_ok ? 1 : 0) << '\n';
    }
}

void print_pretty(const std::vector<ist::bench::TrialReport>& reps) {
    std::printf("%5s %12s %10s %10s %10s %9s %9s %12s %8s %6s\n", "trial", "ops/us",
                "lookups", "inserts", "deletes", "avgdepth", "maxdepth", "footprint",
                "rootreb", "audit");
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const auto& r = reps[i];
        std::printf("%5zu %12.3f %10llu %10llu %10llu %9.3f %9llu %12llu %8llu %6s\n", i,
                    r.throughput_ops_per_us, static_cast<unsigned long long>(r.lookups),
                    static_cast<unsigned long long>(r.inserts),
                    static_cast<unsigned long long>(r.deletes), r.avg_leaf_depth,
                    static_cast<unsigned long long>(r.max_leaf_depth),
                    static_cast<unsigned long long>(r.footprint_bytes),
                    static_cast<unsigned long long>(r.root_rebuilds),
                    r.audit_ok ? "ok" : "FAIL");
    }
}

struct TreeSut {
    ist::Tree tree;
    std::optional<ist::Value> insert(ist::Key k, ist::Value v) { return tree.insert(k, v); }
    std::optional<ist::Value> erase(ist::Key k) { return tree.erase(k); }
    std::optional<ist::Value> lookup(ist::Key k) { return tree.lookup(k); }
};

int run_audit(std::uint64_t seed, std::uint64_t ops, ist::Key key_range) {
    auto make_sut = [] { return TreeSut(); };
    auto res = ist::oracle::differential_run(seed, ops, key_range, make_sut);
    if (!res.pass) {
        std::cerr << "audit: " << res.message << "\n";
        for (const auto& op : res.failing_prefix) {
            std::cerr << "  " << ist::oracle::op_name(op.op) << "(" << op.key << ")"
                      << " tree=";
            if (op.tree_result)
                std::cerr << *op.tree_result;
            else
                std::cerr << "absent";
            std::cerr << " oracle=";
            if (op.oracle_result)
                std::cerr << *op.oracle_result;
            else
                std::cerr << "absent";
            std::cerr << "\n";
        }
        return 1;
    }
    // Replay once more and audit the final structure.
    TreeSut sut;
    std::mt19937_64 rng(seed);
    ist::oracle::OracleSet oracle;
    for (std::uint64_t i = 0; i < ops; ++i) {
        std::uint64_t r = rng();
        std::uint64_t kind = r % 10;
        ist::Key k = rng() % key_range;
        ist::Value v = rng();
        if (kind < 4) {
            sut.insert(k, v);
            oracle.insert(k, v);
        } else if (kind < 7) {
            sut.erase(k);
            oracle.erase(k);
        } else {
            sut.lookup(k);
        }
    }
    auto rep = ist::audit::check_structure(sut.tree);
    if (!rep.ok) {
        std::cerr << "audit: structural check failed: " << rep.error << "\n";
        return 1;
    }
    if (rep.keys.size() != oracle.size()) {
        std::cerr << "audit: key count mismatch vs oracle\n";
        return 1;
    }
    std::cout << "audit ok: " << ops << " ops, " << rep.keys.size() << " keys in tree\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    ist::hooks::arm_from_env();

    CLI::App app{"Concurrent interpolation search tree benchmark"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run the microbenchmark");
    ist::bench::WorkloadSpec spec;
    std::string dist_name = "uniform";
    std::string csv_path;
    bool pretty = false;
    run->add_option("--size", spec.size, "Prefilled key count");
    run->add_option("--threads", spec.threads, "Worker thread count");
    run->add_option("--update-ratio", spec.update_ratio,
                    "Fraction of updates (split evenly insert/delete)");
    run->add_option("--duration", spec.duration_sec, "Measured seconds per trial");
    run->add_option("--ops", spec.ops,
                    "Per-thread op count; nonzero replaces the duration stop");
    run->add_option("--dist", dist_name, "Key distribution: uniform|zipf");
    run->add_option("--theta", spec.theta, "Zipf skew parameter in (0,1)");
    run->add_option("--key-range", spec.key_range, "Keys are drawn from [1, K]");
    run->add_option("--seed", spec.seed, "Base RNG seed");
    run->add_option("--trials", spec.trials, "Number of trials");
    run->add_option("--warmup", spec.warmup_sec, "Warmup seconds per trial");
    run->add_flag("--collaborative,!--no-collaborative", spec.collaborative,
                  "Use collaborative rebuilding (default on)");
    run->add_option("--csv", csv_path, "Also write trial rows to a CSV file");
    run->add_flag("--pretty", pretty, "Print a human-readable table");
    run->add_flag("--pin", spec.pin, "Pin worker threads to cores (best effort)");

    auto* audit = app.add_subcommand("audit", "Replay a seed against the oracle");
    std::uint64_t audit_seed = 1;
    std::uint64_t audit_ops = 100000;
    std::uint64_t audit_range = 1024;
    audit->add_option("--seed", audit_seed, "Replay seed");
    audit->add_option("--ops", audit_ops, "Operation count");
    audit->add_option("--key-range", audit_range, "Key range");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (dist_name == "uniform") {
            spec.dist = ist::bench::Dist::Uniform;
        } else if (dist_name == "zipf") {
            spec.dist = ist::bench::Dist::Zipf;
        } else {
            std::cerr << "unknown distribution: " << dist_name << "\n";
            return 2;
        }
        std::vector<ist::bench::TrialReport> reports;
        try {
            spec.validate();
            reports = ist::bench::run_benchmark(spec);
        } catch (const std::invalid_argument& e) {
            std::cerr << "invalid workload: " << e.what() << "\n";
            return 2;
        }
        bool all_ok = true;
        for (std::size_t i = 0; i < reports.size(); ++i) {
            std::cout << report_to_json(reports[i], static_cast<std::uint32_t>(i)).dump()
                      << "\n";
            all_ok = all_ok && reports[i].audit_ok;
        }
        if (!csv_path.empty()) write_csv(csv_path, reports);
        if (pretty) print_pretty(reports);
        return all_ok ? 0 : 1;
    }
    return run_audit(audit_seed, audit_ops, audit_range);
}
