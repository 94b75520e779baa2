#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "klite/checkpoint.hpp"
#include "klite/cli.hpp"
#include "support/fixtures.hpp"

namespace klite::testing {

struct CliRun {
    int code = 0;
    std::string out, err;
};

inline CliRun run_klite(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Empty string when equal, otherwise the first differing field.
inline std::string compare_checkpoints(const std::filesystem::path& a, const std::filesystem::path& b) {
    const Model x = load_checkpoint(a), y = load_checkpoint(b);
    if (!(x.params.config == y.params.config)) return "encoder config";
    if (x.seed != y.seed) return "seed";
    if (x.vocab.words() != y.vocab.words() || x.vocab.oov_buckets() != y.vocab.oov_buckets()) return "vocabulary";
    const auto tx = list_tensors(x.params), ty = list_tensors(y.params);
    if (tx.size() != ty.size()) return "tensor count";
    for (std::size_t i = 0; i < tx.size(); ++i) {
        if (tx[i].name != ty[i].name) return "tensor order at " + tx[i].name;
        if (tx[i].tensor->rows() != ty[i].tensor->rows() || tx[i].tensor->cols() != ty[i].tensor->cols() ||
            *tx[i].tensor != *ty[i].tensor)
            return "tensor " + tx[i].name;
    }
    return {};
}

struct Stage {
    std::string subcommand;
    std::vector<std::string> args;
    std::vector<std::string> artifacts;    // compared byte-wise
    std::vector<std::string> checkpoints;  // compared field-wise
};

// A small end-to-end pipeline touching every subcommand, writing into `dir`.
inline std::vector<Stage> pipeline_stages(const std::filesystem::path& dir) {
    auto f = [](const char* n) { return fixture(n).string(); };
    auto d = [&](const char* n) { return (dir / n).string(); };
    const std::vector<std::string> snaps{"--wordnet", f("wordnet_boxer.jsonl"), "--wiktionary", f("wiktionary_boxer.jsonl")};
    const std::vector<std::string> enc{"--embed-dim", "8", "--layers", "1", "--heads", "2", "--hidden", "16",
                                       "--max-tokens", "32", "--adapter-bottleneck", "3", "--image-hidden", "16"};
    auto cat = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    return {
        {"augment",
         cat(cat({"augment", "--dataset", f("dataset_small.jsonl"), "--lexicon", f("lexicon.tsv"), "--out", d("aug.jsonl"),
                  "--freq-out", d("freq.jsonl"), "--scheme", "combine", "--max-tokens", "32"},
                 snaps),
             {}),
         {"aug.jsonl", "freq.jsonl"},
         {}},
        {"stats",
         {"stats", "--dataset", f("dataset_small.jsonl"), "--lexicon", f("lexicon.tsv"), "--out", d("stats.json")},
         {"stats.json"},
         {}},
        {"coverage", cat({"coverage", "--queries", f("q.txt")}, snaps), {}, {}},
        {"train",
         cat(cat({"train", "--dataset", d("aug.jsonl"), "--out", d("base.json"), "--trace", d("base_trace.csv"),
                  "--epochs", "3", "--batch-size", "8", "--seed", "4"},
                 snaps),
             enc),
         {"base_trace.csv"},
         {"base.json"}},
        {"train",
         {"train", "--dataset", d("aug.jsonl"), "--out", d("cont.json"), "--trace", d("cont_trace.csv"), "--mode",
          "continual_adapters", "--base", d("base.json"), "--epochs", "2", "--batch-size", "8", "--seed", "5"},
         {"cont_trace.csv"},
         {"cont.json"}},
        {"eval-zeroshot",
         cat({"eval-zeroshot", "--checkpoint", d("cont.json"), "--dataset", f("eval_small.jsonl"), "--classes",
              f("classes.txt"), "--branch-mode", "two_branch_selective", "--templates", f("templates.txt"),
              "--max-tokens", "32", "--pretrain-concepts", f("q.txt"), "--report", d("zs.json"), "--breakdown",
              d("zs.csv")},
             snaps),
         {"zs.json", "zs.csv"},
         {}},
        {"eval-probe",
         {"eval-probe", "--checkpoint", d("base.json"), "--dataset", f("eval_small.jsonl"), "--shots", "3", "--steps",
          "100", "--report", d("probe.json")},
         {"probe.json"},
         {}},
        {"ground-train",
         cat({"ground-train", "--checkpoint", d("base.json"), "--regions", f("regions_small.jsonl"), "--categories",
              f("classes.txt"), "--out", d("ground.json"), "--trace", d("ground_trace.csv"), "--epochs", "3",
              "--max-tokens", "32"},
             snaps),
         {"ground_trace.csv"},
         {"ground.json"}},
        {"ground-eval",
         cat({"ground-eval", "--checkpoint", d("ground.json"), "--regions", f("regions_small.jsonl"), "--categories",
              f("classes.txt"), "--max-tokens", "32", "--out", d("ground_pred.jsonl")},
             snaps),
         {"ground_pred.jsonl"},
         {}},
        {"bench-synth",
         {"bench-synth", "--seeds", "1", "--seed", "2", "--epochs", "3", "--out", d("bench.json")},
         {"bench.json"},
         {}},
    };
}

struct DeterminismResult {
    std::string subcommand;
    bool ok = true;
    std::string detail;
};

// Runs the pipeline, snapshots the artifacts, runs it again in place, and compares.
inline std::vector<DeterminismResult> determinism_check(const std::filesystem::path& dir) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto stages = pipeline_stages(dir);
    std::vector<CliRun> first;
    for (const auto& s : stages) first.push_back(run_klite(s.args));
    const auto saved = dir.string() + ".first";
    std::filesystem::remove_all(saved);
    std::filesystem::copy(dir, saved);

    std::vector<DeterminismResult> out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        const auto again = run_klite(s.args);
        DeterminismResult r{s.subcommand, true, ""};
        auto fail = [&](const std::string& why) {
            if (r.ok) r.detail = why;
            r.ok = false;
        };
        if (first[i].code != 0) fail("first run exited " + std::to_string(first[i].code) + ": " + first[i].err);
        if (again.code != first[i].code) fail("exit code changed");
        if (again.out != first[i].out) fail("stdout differs");
        for (const auto& a : s.artifacts) {
            if (!std::filesystem::exists(dir / a)) fail(a + " missing");
            else if (slurp(dir / a) != slurp(std::filesystem::path(saved) / a)) fail(a + " differs");
        }
        for (const auto& c : s.checkpoints) {
            if (!std::filesystem::exists(dir / c)) {
                fail(c + " missing");
            } else if (auto why = compare_checkpoints(dir / c, std::filesystem::path(saved) / c); !why.empty()) {
                fail(c + ": " + why);
            }
        }
        out.push_back(r);
    }
    std::filesystem::remove_all(saved);
    return out;
}

}  // namespace klite::testing
