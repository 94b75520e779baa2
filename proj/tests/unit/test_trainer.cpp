#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "klite/error.hpp"
#include "klite/trainer.hpp"
#include "support/fixtures.hpp"

using namespace klite;
using namespace klite::testing;

namespace {

std::vector<Triplet> texts_only(const std::vector<std::string>& texts) {
    std::vector<Triplet> out;
    for (const auto& t : texts) out.push_back({Vector::Zero(2), t, TextKind::category, -1, "", false});
    return out;
}

std::vector<int> labels_of(const std::vector<Triplet>& ts) {
    std::vector<int> out;
    for (const auto& t : ts) out.push_back(t.label);
    return out;
}

Vocabulary vocab_for(const std::vector<Triplet>& data) {
    std::vector<std::string> texts;
    for (const auto& t : data) texts.push_back(t.text);
    return Vocabulary::from_texts(texts);
}

TrainConfig toy_train(int epochs, std::uint64_t seed = 3) {
    TrainConfig c;
    c.batch_size = 8;
    c.epochs = epochs;
    c.seed = seed;
    c.optimizer.learning_rate = 3e-3;
    c.encoder = toy_config();
    return c;
}

double mean(const std::vector<TraceRow>& trace, std::size_t from, std::size_t to) {
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += trace[i].loss.total;
    return s / static_cast<double>(to - from);
}

std::vector<Triplet> labelled_fixture() {
    auto data = load_dataset(fixture("dataset_small.jsonl"));
    assign_labels(data);
    return data;
}

}  // namespace

TEST_CASE("assign_labels") {
    auto a = texts_only({"a", "a", "b"});
    assign_labels(a);
    CHECK(labels_of(a) == std::vector<int>{0, 0, 1});

    auto distinct = texts_only({"x", "y", "z", "w"});
    assign_labels(distinct);
    CHECK(labels_of(distinct) == std::vector<int>{0, 1, 2, 3});

    auto normalized = texts_only({"A  Dog", "a dog!", "cat"});
    assign_labels(normalized);
    CHECK(labels_of(normalized) == std::vector<int>{0, 0, 1});

    auto grouped = texts_only({"first text", "second text", "third"});
    grouped[0].group = grouped[1].group = "g";
    assign_labels(grouped);
    CHECK(grouped[0].label == grouped[1].label);
    CHECK(grouped[2].label != grouped[0].label);
}

TEST_CASE("label assignment properties") {
    Rng rng(4);
    const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> texts;
        for (std::size_t i = 0, n = 1 + rng.below(12); i < n; ++i) texts.push_back(pool[rng.below(pool.size())]);
        auto ts = texts_only(texts);
        assign_labels(ts);
        std::set<int> used;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            used.insert(ts[i].label);
            for (std::size_t j = 0; j < ts.size(); ++j) CHECK((texts[i] == texts[j]) == (ts[i].label == ts[j].label));
        }
        CHECK(*used.begin() == 0);
        CHECK(*used.rbegin() == static_cast<int>(used.size()) - 1);
    }
}

TEST_CASE("augment_dataset") {
    const auto store = KnowledgeStore::load(fixture("wordnet_boxer.jsonl"), fixture("wiktionary_boxer.jsonl"));
    const auto lex = Lexicon::load(fixture("lexicon.tsv"));
    const FrequencyTable freq;
    std::vector<Triplet> data{{Vector::Ones(2), "boxer", TextKind::category, -1, "", false},
                              {Vector::Ones(2), "zzzunknown", TextKind::category, -1, "", false},
                              {Vector::Zero(2), "professional boxer is introduced to the crowd", TextKind::caption, -1, "", false}};

    SUBCASE("category hit and miss") {
        const auto r = augment_dataset(data, store, freq, lex, {});
        REQUIRE(r.triplets.size() == 3);
        CHECK(r.triplets[0].text == "a photo of a boxer, boxer, a participant (fighter) in a boxing match");
        CHECK(r.triplets[0].augmented);
        CHECK(r.triplets[1].text == "a photo of a zzzunknown");
        CHECK_FALSE(r.triplets[1].augmented);
        CHECK(r.audit.hits == 2);
        CHECK(r.audit.misses == 1);
        CHECK(r.audit.emitted == 3);
    }
    SUBCASE("knowledge switched off") {
        AugmentOptions off;
        off.with_knowledge = false;
        const auto r = augment_dataset(data, store, freq, lex, off);
        CHECK(r.triplets[0].text == "a photo of a boxer");
        CHECK(r.triplets[2].text == data[2].text);
        CHECK(r.audit.hits == 0);
    }
    SUBCASE("combine emits two texts sharing a label") {
        AugmentOptions combine;
        combine.scheme = CaptionScheme::combine;
        const auto r = augment_dataset(data, store, freq, lex, combine);
        REQUIRE(r.triplets.size() == 4);
        CHECK(r.triplets[2].text == "professional boxer, a participant (fighter) in a boxing match");
        CHECK(r.triplets[3].text ==
              "professional boxer is introduced to the crowd, professional boxer, a participant (fighter) in a boxing match");
        CHECK(r.triplets[2].label == r.triplets[3].label);
        CHECK(r.triplets[2].image == r.triplets[3].image);
        CHECK(r.triplets[2].label != r.triplets[0].label);
        CHECK(r.audit.emitted == 4);
    }
}

TEST_CASE("dataset files") {
    const auto data = labelled_fixture();
    CHECK(data.size() == 40);
    const auto path = std::filesystem::temp_directory_path() / "klite_dataset_roundtrip.jsonl";
    save_dataset(data, path);
    const auto back = load_dataset(path);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].image == data[i].image);
        CHECK(back[i].text == data[i].text);
        CHECK(back[i].label == data[i].label);
        CHECK(back[i].kind == data[i].kind);
    }
    std::ofstream(path) << "{\"image\": [1, 2], \"text\": \"a\"}\n{\"image\": [1], \"text\": \"b\"}\n";
    try {
        load_dataset(path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::ofstream(path) << "";
    CHECK_THROWS_AS(load_dataset(path), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("training config validation") {
    const auto data = labelled_fixture();
    const auto vocab = vocab_for(data);
    auto c = toy_train(1);
    c.batch_size = 1;
    CHECK_THROWS_AS(train(c, data, vocab), DataError);
    c = toy_train(0);
    CHECK_THROWS_AS(train(c, data, vocab), DataError);
    c = toy_train(1);
    c.mode = TrainMode::continual_adapters;
    CHECK_THROWS_AS(train(c, data, vocab), DataError);
    CHECK_THROWS_AS(train(toy_train(1), texts_only({"a", "b"}), vocab), DataError);
    for (auto m : {TrainMode::scratch_1branch, TrainMode::scratch_2branch, TrainMode::continual_adapters})
        CHECK(parse_train_mode(to_string(m)) == m);
}

TEST_CASE("training descends and is reproducible") {
    const auto data = labelled_fixture();
    const auto vocab = vocab_for(data);
    const auto r = train(toy_train(40), data, vocab);
    REQUIRE(r.trace.size() == 200);
    CHECK(mean(r.trace, 190, 200) < mean(r.trace, 0, 10));
    for (std::size_t i = 0; i < r.trace.size(); ++i) CHECK(r.trace[i].step == static_cast<long>(i) + 1);
    CHECK(r.samples_seen == 40 * 40);

    const auto again = train(toy_train(40), data, vocab);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        CHECK(again.trace[i].loss.total == r.trace[i].loss.total);
        CHECK(again.trace[i].tau == r.trace[i].tau);
    }
    const auto a = list_tensors(r.model.params), b = list_tensors(again.model.params);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].tensor == *b[i].tensor);

    const auto other = train(toy_train(2, 99), data, vocab);
    CHECK(other.trace[0].loss.total != r.trace[0].loss.total);
}

TEST_CASE("partial trailing batches") {
    const auto full = labelled_fixture();
    auto data = std::vector<Triplet>(full.begin(), full.begin() + 17);
    const auto r = train(toy_train(1), data, vocab_for(data));
    // 8 + 8, the single leftover item is dropped
    CHECK(r.trace.size() == 2);
    CHECK(r.samples_seen == 16);
    data.push_back(full[17]);
    CHECK(train(toy_train(1), data, vocab_for(data)).trace.size() == 3);
}

TEST_CASE("continual adapter training freezes the base encoder") {
    const auto data = labelled_fixture();
    const auto vocab = vocab_for(data);
    const auto base = train(toy_train(5), data, vocab).model;

    auto cfg = toy_train(40, 8);
    cfg.mode = TrainMode::continual_adapters;
    const auto r = train(cfg, data, vocab, &base);
    REQUIRE(r.trace.size() == 200);
    CHECK(mean(r.trace, 190, 200) < mean(r.trace, 0, 10));
    CHECK(r.model.params.has_adapters());

    const auto before = list_tensors(base.params);
    std::size_t compared = 0, adapters = 0;
    for (const auto& ref : list_tensors(r.model.params)) {
        if (ref.group == TensorGroup::adapter) {
            ++adapters;
            continue;
        }
        const auto it = std::find_if(before.begin(), before.end(), [&](const auto& b) { return b.name == ref.name; });
        REQUIRE(it != before.end());
        CHECK_MESSAGE(*it->tensor == *ref.tensor, ref.name);
        ++compared;
    }
    CHECK(compared == before.size());
    CHECK(adapters > 0);
    CHECK(r.routed.knowledge == r.samples_seen);
    CHECK(r.routed.vanilla == 0);
}

TEST_CASE("two-branch routing touches exactly one branch per sample") {
    const auto store = KnowledgeStore::load(fixture("wordnet_boxer.jsonl"), fixture("wiktionary_boxer.jsonl"));
    const auto lex = Lexicon::load(fixture("lexicon.tsv"));
    auto raw = load_dataset(fixture("dataset_small.jsonl"));
    for (int i = 0; i < 6; ++i) raw.push_back({raw[std::size_t(i)].image, "zzzunknown", TextKind::category, -1, "", false});
    const auto aug = augment_dataset(raw, store, build_frequency_table({"a dog"}, lex), lex, {}).triplets;
    const auto augmented = static_cast<std::size_t>(
        std::count_if(aug.begin(), aug.end(), [](const Triplet& t) { return t.augmented; }));
    REQUIRE(augmented > 0);
    REQUIRE(augmented < aug.size());

    auto cfg = toy_train(2);
    cfg.mode = TrainMode::scratch_2branch;
    cfg.encoder.max_tokens = 64;
    const auto r = train(cfg, aug, vocab_for(aug));
    CHECK(r.routed.vanilla + r.routed.knowledge == r.samples_seen);
    CHECK(r.routed.knowledge == 2 * augmented);
    CHECK(r.routed.vanilla == 2 * (aug.size() - augmented));

    cfg.mode = TrainMode::scratch_1branch;
    const auto one = train(cfg, aug, vocab_for(aug));
    CHECK(one.routed.knowledge == 0);
    CHECK(route(TrainMode::scratch_1branch, aug.front()) == Branch::vanilla);
}

TEST_CASE("non-finite loss aborts with the batch") {
    auto data = labelled_fixture();
    data[0].image(0) = std::numeric_limits<double>::quiet_NaN();
    auto cfg = toy_train(1);
    cfg.batch_size = 40;
    try {
        train(cfg, data, vocab_for(data));
        FAIL("expected a training error");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("text=\"boxer\"") != std::string::npos);
    }
}

TEST_CASE("trace CSV") {
    const auto data = labelled_fixture();
    const auto r = train(toy_train(1), data, vocab_for(data));
    const auto path = std::filesystem::temp_directory_path() / "klite_trace.csv";
    write_trace_csv(r.trace, path);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "step,L_i2t,L_t2i,L_IC,tau");
    std::getline(in, row);
    std::stringstream ss(row);
    std::string field;
    std::vector<double> values;
    while (std::getline(ss, field, ',')) values.push_back(std::stod(field));
    REQUIRE(values.size() == 5);
    CHECK(values[0] == 1);
    CHECK(values[1] == r.trace[0].loss.i2t);
    CHECK(values[3] == r.trace[0].loss.total);
    CHECK(values[4] == r.trace[0].tau);
    std::filesystem::remove(path);
}
