#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace lumpbound;
using namespace testing_support;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("lumpbound_test_" + name);
}

ErrorKind parse_error_kind(const std::string& text) {
    QuietWarnings quiet;
    try {
        (void)parse_model(text);
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "model parsed unexpectedly";
    return ErrorKind::InvalidArgument;
}

void expect_identical(const Model& a, const Model& b) {
    EXPECT_TRUE(a.rates == b.rates);
    EXPECT_EQ(a.space()->labels(), b.space()->labels());
    for (std::size_t i = 0; i < a.space()->size(); ++i) EXPECT_EQ(a.initial[i], b.initial[i]);
    EXPECT_EQ(a.lumping.assignment(), b.lumping.assignment());
    EXPECT_EQ(a.lumping.coarse()->labels(), b.lumping.coarse()->labels());
    ASSERT_EQ(a.functions.size(), b.functions.size());
    for (const auto& [name, f] : a.functions) EXPECT_TRUE(f.values().size() == b.function(name).size() &&
                                                          std::equal(f.values().begin(), f.values().end(),
                                                                     b.function(name).values().begin()));
}

}  // namespace

TEST(LoadModel, MinimalDense) {
    const auto m = parse_model(R"({
        "states": ["up", "down"],
        "rates": {"dense": [[-1, 1], [2, -2]]},
        "initial": {"up": 0.5, "down": 0.5},
        "lumping": {"up": "U", "down": "D"},
        "functions": {"avail": {"up": 1, "down": 0}}
    })");
    EXPECT_EQ(m.space()->size(), 2u);
    EXPECT_EQ(m.rates(1, 0), 2.0);
    EXPECT_EQ(m.function("avail")[0], 1.0);
    EXPECT_THROW((void)m.function("missing"), Error);
}

TEST(LoadModel, DefaultsAreLogged) {
    std::vector<std::string> warnings;
    const auto old = set_warning_sink([&](std::string_view w) { warnings.emplace_back(w); });
    const auto m = parse_model(R"({"states": ["a", "b"], "rates": {"dense": [[-1, 1], [2, -2]]}})");
    set_warning_sink(old);
    EXPECT_TRUE(m.lumping.is_identity());
    EXPECT_EQ(m.initial[0], 0.5);
    ASSERT_EQ(warnings.size(), 2u);  // initial, lumping
}

TEST(LoadModel, SparseRules) {
    QuietWarnings quiet;
    const auto m = parse_model(R"({"states": ["a", "b", "c"],
        "rates": {"sparse": [["a", "b", 1.5], ["b", "c", 2], ["c", "a", 0.5], ["a", "a", 99]]}})");
    EXPECT_EQ(m.rates(0, 0), -1.5);
    EXPECT_EQ(m.rates(0, 2), 0.0);
    EXPECT_EQ(m.rates(2, 2), -0.5);
    EXPECT_EQ(parse_error_kind(R"({"states": ["a", "b"], "rates": {"sparse": [["a", "b", 1], ["a", "b", 2]]}})"),
              ErrorKind::ParseError);
    EXPECT_EQ(parse_error_kind(R"({"states": ["a", "b"], "rates": {"sparse": [["a", "z", 1]]}})"),
              ErrorKind::ParseError);
}

TEST(LoadModel, Errors) {
    EXPECT_EQ(parse_error_kind(R"({"states": ["a", "b"], "rates": {"dense": [[-1, 1], [-2, 2]]}})"),
              ErrorKind::ValidationError);
    EXPECT_EQ(parse_error_kind(R"({"states": ["a", "b"], "rates": {"dense": [[-1, 1], [2, -2]]}, "extra": 1})"),
              ErrorKind::ParseError);
    EXPECT_EQ(parse_error_kind(R"({"states": ["a", "b"], "rates": {"dense": [[-1, 1], [2, -2]]},
                                    "initial": {"a": 0.7, "b": 0.7}})"),
              ErrorKind::ValidationError);
    EXPECT_EQ(parse_error_kind(R"({"states": ["a", "b"], "rates": {"dense": [[-1, 1], [2, -2]]},
                                    "lumping": {"a": "A"}})"),
              ErrorKind::ValidationError);
    try {
        (void)parse_model("{\n\"states\": [\"a\",\n  oops]\n}");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    try {
        (void)load_model(temp_path("does_not_exist.json"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IoError);
    }
}

TEST(SaveModel, RoundTripRandomBitExact) {
    Gen gen(61);
    for (int i = 0; i < 20; ++i) {
        const auto m = gen.model();
        const auto path = temp_path("rt_random.json");
        for (auto fmt : {RateFormat::dense, RateFormat::sparse}) {
            save_model(m, path, fmt);
            expect_identical(m, load_model(path));
        }
        std::filesystem::remove(path);
    }
}

TEST(SaveModel, RoundTripQueueBitExact) {
    auto spec = QueueNetworkSpec::defaults();
    spec.series_rate = 0.1 + 0.2;  // not exactly representable in short decimal form
    spec.parallel_rates = {1.0 / 3.0, 0.7, 2.0 / 7.0};
    const auto m = build_queueing_network(spec).to_model();
    const auto path = temp_path("rt_queue.json");
    save_model(m, path);
    expect_identical(m, load_model(path));
    std::filesystem::remove(path);
}

TEST(SaveModel, UnwritablePath) {
    const auto m = build_queueing_network(QueueNetworkSpec::defaults()).to_model();
    try {
        save_model(m, "/nonexistent-dir/sub/model.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IoError);
    }
}

TEST(RandomCtmc, Examples) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto q = random_irreducible_ctmc(2, 0.1, 5.0, 0.3, seed);
        EXPECT_GT(q(0, 1), 0.0);
        EXPECT_GT(q(1, 0), 0.0);
    }
    EXPECT_TRUE(random_irreducible_ctmc(8, 0.1, 5.0, 0.3, 7) == random_irreducible_ctmc(8, 0.1, 5.0, 0.3, 7));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto q = random_irreducible_ctmc(8, 0.1, 5.0, 0.3, seed);
        EXPECT_TRUE(is_irreducible(q));
        for (std::size_t x = 0; x < 8; ++x)
            for (std::size_t y = 0; y < 8; ++y)
                if (x != y && q(x, y) != 0.0) {
                    EXPECT_GE(q(x, y), 0.1);
                    EXPECT_LE(q(x, y), 5.0);
                }
    }
    EXPECT_THROW((void)random_irreducible_ctmc(1, 0.1, 5.0, 0.3, 1), Error);
    EXPECT_THROW((void)random_irreducible_ctmc(3, 2.0, 1.0, 0.3, 1), Error);
    EXPECT_THROW((void)random_irreducible_ctmc(3, 0.1, 1.0, 0.0, 1), Error);
}

TEST(RandomModel, DeterministicAndWellFormed) {
    RandomModelSpec spec;
    spec.seed = 5;
    const auto a = random_model(spec);
    const auto b = random_model(spec);
    expect_identical(a, b);
    EXPECT_EQ(a.lumping.coarse_size(), 3u);
    EXPECT_TRUE(a.initial.is_positive());
    EXPECT_TRUE(try_lump_function(a.function("lumpable"), a.lumping).has_value());
}

TEST(QueueingNetwork, SingleCustomerShuttle) {
    QueueNetworkSpec spec;
    spec.servers = 1;
    spec.customers = 1;
    spec.series_rate = 1.5;
    spec.parallel_rates = {0.25};
    spec.routing = {1.0};
    QuietWarnings quiet;
    const auto net = build_queueing_network(spec);
    ASSERT_EQ(net.rates.size(), 2u);
    // Lexicographic order puts (0,1) first: the customer is at the parallel server.
    EXPECT_EQ(net.rates.space()->labels(), (std::vector<std::string>{"(0,1)", "(1,0)"}));
    EXPECT_EQ(net.rates(0, 1), 0.25);
    EXPECT_EQ(net.rates(1, 0), 1.5);
    EXPECT_TRUE(net.lumping.is_identity());
}

TEST(QueueingNetwork, Sizes) {
    QueueNetworkSpec spec;
    spec.servers = 2;
    spec.customers = 2;
    spec.parallel_rates = {0.5, 0.5};
    spec.routing = {0.5, 0.5};
    const auto small = build_queueing_network(spec);
    EXPECT_EQ(small.rates.size(), 6u);
    EXPECT_EQ(small.lumping.coarse_size(), 3u);
    for (const auto& [name, f] : small.functions) EXPECT_TRUE(try_lump_function(f, small.lumping)) << name;

    const auto def = build_queueing_network(QueueNetworkSpec::defaults());
    EXPECT_EQ(def.rates.size(), 84u);
    EXPECT_EQ(def.lumping.coarse_size(), 7u);

    QueueNetworkSpec big;
    big.servers = 30;
    big.customers = 100;
    big.parallel_rates.assign(30, 1.0);
    big.routing.assign(30, 1.0 / 30.0);
    try {
        (void)build_queueing_network(big);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StateSpaceTooLarge);
    }
}

TEST(QueueingNetwork, SpecValidation) {
    auto spec = QueueNetworkSpec::defaults();
    spec.routing = {0.5, 0.5, 0.5};
    EXPECT_THROW((void)build_queueing_network(spec), Error);
    spec = QueueNetworkSpec::defaults();
    spec.parallel_rates[1] = 0.0;
    EXPECT_THROW((void)build_queueing_network(spec), Error);
    spec = QueueNetworkSpec::defaults();
    spec.parallel_rates.pop_back();
    EXPECT_THROW((void)build_queueing_network(spec), Error);
}

TEST(QueueingProperties, ConservationIrreducibilityLumpability) {
    Gen gen(62);
    for (int i = 0; i < 30; ++i) {
        QueueNetworkSpec spec;
        spec.servers = gen.size(1, 4);
        spec.customers = gen.size(1, 6);
        spec.series_rate = gen.real(0.1, 3.0);
        spec.parallel_rates = gen.values(spec.servers, 0.1, 3.0);
        spec.routing = gen.positive_distribution(spec.servers);
        QuietWarnings quiet;
        const auto net = build_queueing_network(spec);
        const auto n = net.rates.size();
        EXPECT_EQ(n, *binomial_capped(spec.customers + spec.servers, spec.servers, 1'000'000));
        for (std::size_t x = 0; x < n; ++x) {
            std::size_t total = 0;
            for (auto k : net.occupancy[x]) total += k;
            EXPECT_EQ(total, spec.customers);
            for (std::size_t y = 0; y < n; ++y) {
                if (x == y || net.rates(x, y) == 0.0) continue;
                std::size_t moved = 0;
                for (std::size_t s = 0; s <= spec.servers; ++s)
                    moved += net.occupancy[x][s] > net.occupancy[y][s] ? net.occupancy[x][s] - net.occupancy[y][s] : 0;
                EXPECT_EQ(moved, 1u);
                EXPECT_TRUE(net.occupancy[x][0] != net.occupancy[y][0]);
            }
        }
        EXPECT_TRUE(is_irreducible(net.rates));
        for (const auto& [name, f] : net.functions) EXPECT_TRUE(try_lump_function(f, net.lumping)) << name;
    }
}

TEST(Binomial, Capped) {
    EXPECT_EQ(binomial_capped(9, 3, 1000), 84u);
    EXPECT_EQ(binomial_capped(4, 2, 1000), 6u);
    EXPECT_FALSE(binomial_capped(130, 30, 1'000'000));
    EXPECT_EQ(binomial_capped(60, 30, std::numeric_limits<std::uint64_t>::max()), 118264581564861424ULL);
}

TEST(Report, DigestAndBoundJson) {
    const auto def = build_queueing_network(QueueNetworkSpec::defaults()).to_model();
    const LumpedModel lm(def.rates, def.initial, def.lumping);
    const auto d = model_digest(lm);
    EXPECT_EQ(d["states"], 84);
    EXPECT_EQ(d["lumped_states"], 7);
    EXPECT_EQ(d["rate_norm"], 2.0 * def.rates.max_exit_rate());
    const auto j = to_json(limit_bounds(lm, def.function("throughput")));
    EXPECT_EQ(j["kind"], "limit");
    EXPECT_TRUE(j.contains("iterations"));
    EXPECT_TRUE(j.contains("convergence_gap"));
}
