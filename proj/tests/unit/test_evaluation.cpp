#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "klite/error.hpp"
#include "klite/evaluation.hpp"
#include "support/fixtures.hpp"
#include "support/stats_oracle.hpp"

using namespace klite;
using namespace klite::testing;

namespace {

const std::vector<std::string> kClasses{"boxer", "dog", "zzzunknown"};

KnowledgeStore boxer_store() {
    return KnowledgeStore::load(fixture("wordnet_boxer.jsonl"), fixture("wiktionary_boxer.jsonl"));
}

Model class_model(std::uint64_t seed) {
    Model m;
    m.vocab = Vocabulary::from_texts({"a photo of a boxer dog zzzunknown", "a participant (fighter) in a boxing match",
                                      "a domesticated carnivorous mammal", "a picture of"});
    auto cfg = toy_config(static_cast<int>(m.vocab.size()));
    cfg.max_tokens = 32;
    m.params = init_params(cfg, seed);
    randomize(m.params, seed + 1, 0.1);
    return m;
}

// Image encoder that maps a non-negative input to itself padded with zeros.
ModelParams identity_image_encoder(int input_dim) {
    auto cfg = toy_config(20, input_dim);
    auto p = init_params(cfg, 1);
    p.image_w1 = Tensor::Identity(input_dim, cfg.image_hidden);
    p.image_b1.setZero();
    p.image_w2 = Tensor::Identity(cfg.image_hidden, cfg.embed_dim);
    p.image_b2.setZero();
    return p;
}

ClassEmbeddingMatrix random_classes(Rng& rng, int p, int c) {
    ClassEmbeddingMatrix m;
    m.columns = Tensor(p, c);
    for (int j = 0; j < c; ++j) {
        Vector v = random_vector(rng, p);
        m.columns.col(j) = v / v.norm();
        m.names.push_back("c" + std::to_string(j));
    }
    return m;
}

}  // namespace

TEST_CASE("class embeddings") {
    const auto store = boxer_store();
    const auto model = class_model(2);
    ClassEmbeddingOptions opts;
    opts.max_tokens = 32;

    SUBCASE("composed texts and unit columns") {
        const auto m = build_class_embeddings(model, kClasses, store, opts);
        CHECK(m.texts[0] == compose_class_text(default_template(), "boxer", "a participant (fighter) in a boxing match").text);
        CHECK(m.knowledge_hit == std::vector<bool>{true, true, false});
        CHECK(m.texts[2] == "a photo of a zzzunknown");
        for (int c = 0; c < 3; ++c) CHECK(m.columns.col(c).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("without knowledge the plain prompt is encoded") {
        ClassEmbeddingOptions off = opts;
        off.with_knowledge = false;
        const auto m = build_class_embeddings(model, kClasses, store, off);
        const auto empty = KnowledgeStore::load(fixture("wordnet_root.jsonl"), std::nullopt);
        const auto plain = build_class_embeddings(model, kClasses, empty, opts);
        for (std::size_t c = 0; c < kClasses.size(); ++c) CHECK(m.texts[c] == default_template().apply(kClasses[c]));
        CHECK(m.columns == plain.columns);
    }
    SUBCASE("selective branches with zero adapters equal the vanilla model") {
        Model adapted = model;
        enable_adapters(adapted.params, 9);
        ClassEmbeddingOptions sel = opts;
        sel.branch_mode = BranchMode::two_branch_selective;
        const auto a = build_class_embeddings(adapted, kClasses, store, sel);
        const auto b = build_class_embeddings(model, kClasses, store, opts);
        CHECK(a.columns == b.columns);
        CHECK(a.branch == std::vector<Branch>{Branch::knowledge, Branch::knowledge, Branch::vanilla});
    }
    SUBCASE("template ensembles average then renormalize") {
        ClassEmbeddingOptions two = opts;
        two.templates = load_templates(fixture("templates.txt"));
        ClassEmbeddingOptions second = opts;
        second.templates = {two.templates[1]};
        const auto ens = build_class_embeddings(model, kClasses, store, two);
        const auto a = build_class_embeddings(model, kClasses, store, opts);
        const auto b = build_class_embeddings(model, kClasses, store, second);
        for (int c = 0; c < 3; ++c) {
            const Vector mean = a.columns.col(c) + b.columns.col(c);
            CHECK((ens.columns.col(c) - mean / mean.norm()).norm() < 1e-12);
        }
    }
    SUBCASE("empty class list") { CHECK_THROWS_AS(build_class_embeddings(model, {}, store, opts), DataError); }
}

TEST_CASE("zero-shot classification") {
    SUBCASE("single class") {
        Rng rng(1);
        const auto params = init_params(toy_config(), 2);
        const auto classes = random_classes(rng, params.config.embed_dim, 1);
        std::vector<Vector> images;
        for (int i = 0; i < 6; ++i) images.push_back(random_vector(rng, 6));
        const auto r = zero_shot_classify(params, images, classes, {0, 0, 1, 0, 1, 0});
        for (int p : r.predictions) CHECK(p == 0);
        CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
    }
    SUBCASE("diagonal fixture") {
        const auto params = identity_image_encoder(6);
        ClassEmbeddingMatrix classes;
        classes.columns = Tensor::Identity(params.config.embed_dim, 6);
        std::vector<Vector> images;
        std::vector<int> labels;
        for (int c = 0; c < 6; ++c) {
            for (int k = 1; k <= 3; ++k) {
                Vector v = Vector::Zero(6);
                v(c) = k;
                images.push_back(v);
                labels.push_back(c);
            }
        }
        const auto r = zero_shot_classify(params, images, classes, labels);
        CHECK(r.accuracy == 1.0);
        for (double a : r.per_class_accuracy) CHECK(a == 1.0);
    }
    SUBCASE("ties go to the lowest index") {
        const auto params = init_params(toy_config(), 2);
        ClassEmbeddingMatrix classes;
        classes.columns = Tensor::Zero(params.config.embed_dim, 3);
        const auto r = zero_shot_classify(params, {Vector::Ones(6)}, classes);
        CHECK(r.predictions == std::vector<int>{0});
        CHECK(r.accuracy == 0.0);
    }
    SUBCASE("label-independent embeddings sit at chance") {
        double total = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng rng(100 + seed);
            const auto params = init_params(toy_config(), seed);
            const auto classes = random_classes(rng, params.config.embed_dim, 10);
            std::vector<Vector> images;
            std::vector<int> labels;
            for (int i = 0; i < 400; ++i) {
                images.push_back(random_vector(rng, 6));
                labels.push_back(i % 10);
            }
            const double acc = zero_shot_classify(params, images, classes, labels).accuracy;
            // 3 sigma of a binomial(400, 0.1) proportion
            CHECK(std::abs(acc - 0.1) < 3 * std::sqrt(0.09 / 400));
            total += acc;
        }
        CHECK(std::abs(total / 5 - 0.1) < 0.05);
    }
}

TEST_CASE("linear probe") {
    Rng rng(5);
    auto blobs = [&](int per_class, int classes, double spread) {
        Tensor x(per_class * classes, 4);
        std::vector<int> y;
        for (int c = 0; c < classes; ++c) {
            for (int i = 0; i < per_class; ++i) {
                const int row = c * per_class + i;
                x.row(row) = random_vector(rng, 4).transpose() * spread;
                x(row, c % 4) += 3.0;
                y.push_back(c);
            }
        }
        return std::pair{x, y};
    };
    SUBCASE("separable two-class features") {
        const auto [x, y] = blobs(20, 2, 0.2);
        const auto r = linear_probe(x, y, {});
        CHECK(r.mean_accuracy == 1.0);
        CHECK(r.per_seed.size() == 3);
    }
    SUBCASE("shuffled labels fall to chance") {
        auto [x, y] = blobs(60, 4, 2.0);
        Rng shuffle(6);
        shuffle.shuffle(y);
        const auto r = linear_probe(x, y, {});
        CHECK(std::abs(r.mean_accuracy - 0.25) < 0.12);
    }
    SUBCASE("too few examples") {
        const auto [x, y] = blobs(5, 2, 0.2);
        CHECK_THROWS_AS(linear_probe(x, y, {}), DataError);
        ProbeConfig one;
        one.shots_per_class = 4;
        CHECK_NOTHROW(linear_probe(x, y, one));
    }
    SUBCASE("fixed seed is deterministic") {
        const auto [x, y] = blobs(15, 3, 1.5);
        ProbeConfig c;
        c.seed = 11;
        const auto a = linear_probe(x, y, c), b = linear_probe(x, y, c);
        CHECK(a.per_seed == b.per_seed);
    }
}

TEST_CASE("concept overlap") {
    CHECK(concept_overlap({"a", "b", "c"}, {"b", "c", "d", "e"}) == 50.0);
    CHECK(concept_overlap({"x", "y"}, {"x", "y"}) == 100.0);
    CHECK(concept_overlap({"x"}, {"y"}) == 0.0);
    CHECK(concept_overlap({"Golden  Retriever"}, {"golden retriever"}) == 100.0);
    CHECK_THROWS_AS(concept_overlap({"a"}, {}), DataError);
}

TEST_CASE("concept overlap against set enumeration") {
    Rng rng(21);
    const std::vector<std::string> pool{"cat", "Dog", "red fox", "owl", "sea  lion", "ant", "bee", "elk"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> pre, down;
        for (std::size_t i = 0, n = rng.below(8); i < n; ++i) pre.push_back(pool[rng.below(pool.size())]);
        for (std::size_t i = 0, n = 1 + rng.below(8); i < n; ++i) down.push_back(pool[rng.below(pool.size())]);
        const double got = concept_overlap(pre, down);
        CHECK(got == brute_overlap(pre, down));
        CHECK(got >= 0.0);
        CHECK(got <= 100.0);
        auto more = pre;
        more.push_back(pool[rng.below(pool.size())]);
        CHECK(concept_overlap(more, down) >= got);
    }
}

TEST_CASE("dataset statistics") {
    const auto lex = Lexicon::load(fixture("lexicon.tsv"));
    const FrequencyTable freq;
    SUBCASE("two concepts") {
        std::vector<std::string> names(6, "a");
        names.insert(names.end(), 2, "b");
        const auto s = dataset_stats(category_items(names), freq, lex);
        CHECK(s.instances == 8);
        CHECK(s.concepts_full == 2);
        CHECK(s.concepts_minfreq == 1);
        CHECK(s.mean_ins_per_concept == 4.0);
        CHECK(s.std_ins_per_concept == 2.0);
    }
    SUBCASE("one concept") {
        const auto s = dataset_stats(category_items(std::vector<std::string>(10, "dog")), freq, lex);
        CHECK(s.concepts_full == 1);
        CHECK(s.mean_ins_per_concept == 10.0);
        CHECK(s.std_ins_per_concept == 0.0);
        CHECK(s.vocab_full == 1);
    }
    SUBCASE("nothing survives the filter") {
        const auto s = dataset_stats(category_items({"a", "b", "b"}), freq, lex);
        CHECK(s.concepts_minfreq == 0);
        CHECK(s.vocab_minfreq == 0);
    }
    SUBCASE("captions use their rarest noun phrase") {
        std::vector<Triplet> items = category_items({"crowd"});
        items.push_back({Vector::Zero(1), "professional boxer is introduced to the crowd", TextKind::caption, -1, "", false});
        const auto counts = concept_counts(items, build_frequency_table({"the crowd", "boxer", "boxer"}, lex), lex);
        CHECK(counts == std::map<std::string, std::size_t>{{"crowd", 1}, {"professional boxer", 1}});
    }
}

TEST_CASE("dataset statistics against brute-force counting") {
    Rng rng(31);
    const auto lex = Lexicon::load(fixture("lexicon.tsv"));
    const FrequencyTable freq;
    const std::vector<std::string> pool{"cat", "Dog", "red fox", "RED  owl", "sea lion", "ant", "big cat"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> names;
        for (std::size_t i = 0, n = 1 + rng.below(40); i < n; ++i) names.push_back(pool[rng.below(pool.size())]);
        const std::size_t min_freq = rng.below(6);
        const auto got = dataset_stats(category_items(names), freq, lex, min_freq);
        const auto want = brute_stats(names, min_freq);
        CHECK(got.instances == want.instances);
        CHECK(got.concepts_full == want.concepts_full);
        CHECK(got.concepts_minfreq == want.concepts_minfreq);
        CHECK(got.vocab_full == want.vocab_full);
        CHECK(got.vocab_minfreq == want.vocab_minfreq);
        CHECK(stats_match(got, want));
    }
}

TEST_CASE("report files") {
    const auto dir = std::filesystem::temp_directory_path();
    EvalReport report;
    report.top1 = 0.75;
    report.per_class = {1.0, 0.5};
    report.concept_overlap = 50.0;
    report.knowledge_coverage = 100.0;
    report.config_digest = "abc";
    write_eval_report(report, {"dog", "cat"}, dir / "klite_report.json");
    std::ifstream in(dir / "klite_report.json");
    const auto doc = nlohmann::json::parse(in);
    CHECK(doc.at("top1") == 0.75);
    CHECK(doc.at("per_class").at("cat") == 0.5);
    CHECK(doc.at("knowledge_coverage") == 100.0);
    CHECK(doc.at("config_digest") == "abc");

    write_breakdown_csv({{"toy", 0.5, 25.0, 100.0}}, dir / "klite_breakdown.csv");
    std::ifstream csv(dir / "klite_breakdown.csv");
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(header == "dataset,score,concept_overlap,knowledge_coverage");
    CHECK(row == "toy,0.500000,25.000000,100.000000");
    std::filesystem::remove(dir / "klite_report.json");
    std::filesystem::remove(dir / "klite_breakdown.csv");
}
