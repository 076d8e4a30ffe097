#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "icafuse/error.hpp"
#include "icafuse/numerics.hpp"
#include "icafuse/pipeline.hpp"
#include "support.hpp"

using namespace icafuse;

namespace {

std::vector<Label> labels_of(std::size_t hc, std::size_t sz) {
    std::vector<Label> y(hc, Label::HC);
    y.insert(y.end(), sz, Label::SZ);
    return y;
}

double brute_auc(const std::vector<double>& s, const std::vector<Label>& y) {
    double num = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] != Label::SZ || y[j] != Label::HC) continue;
            pairs += 1;
            num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return num / pairs;
}

PhantomSpec small_phantom(std::vector<double> effects, double noise = 1.0) {
    PhantomSpec p;
    p.n_per_class = 40;
    p.m_per_modality = {300, 300};
    p.effect_sizes = std::move(effects);
    p.noise_sigma = noise;
    return p;
}

ExperimentConfig quick_config() {
    ExperimentConfig c;
    c.phantom = small_phantom({1.0, 1.5});
    c.c = 8;
    c.batch_spec = {5, 5, 30};
    c.mlp.fine_tune = {0.1, 20, 10, 20};
    c.folds = 4;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("folds partition the subjects") {
    RngStream rng(1);
    const auto y8 = labels_of(4, 4);
    const FoldPlan one = make_folds(y8, 8, false, rng);
    for (std::size_t f = 0; f < 8; ++f) CHECK(one.test_rows(f).size() == 1);

    const auto y = labels_of(152, 152);
    const FoldPlan plan = make_folds(y, 8, true, rng);
    std::vector<int> seen(y.size(), 0);
    for (std::size_t f = 0; f < 8; ++f) {
        const auto test = plan.test_rows(f);
        CHECK(test.size() == 38);
        CHECK(double(test.size()) / y.size() == 0.125);
        for (auto r : test) ++seen[r];
        const auto train = plan.train_rows(f);
        CHECK(train.size() + test.size() == y.size());
        std::vector<std::size_t> both;
        std::set_intersection(train.begin(), train.end(), test.begin(), test.end(), std::back_inserter(both));
        CHECK(both.empty());
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("stratified folds balance classes") {
    RngStream rng(2);
    const auto y = labels_of(20, 12);
    const FoldPlan plan = make_folds(y, 4, true, rng);
    for (std::size_t f = 0; f < 4; ++f) {
        const auto test = plan.test_rows(f);
        const auto sz = std::count_if(test.begin(), test.end(), [&](std::size_t r) { return y[r] == Label::SZ; });
        CHECK(test.size() - sz == 5);
        CHECK(sz == 3);
    }
    RngStream a(3), b(3);
    CHECK(make_folds(y, 4, true, a).assignments == make_folds(y, 4, true, b).assignments);
    CHECK_THROWS_AS(make_folds(y, 13, true, rng), ValidationError);
    CHECK_THROWS_AS(make_folds(y, 33, false, rng), ValidationError);
}

TEST_CASE("AUC basics") {
    const auto y = labels_of(2, 2);
    CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
    CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    CHECK(auc(s, y) == brute_auc(s, y));
    CHECK(auc(s, y) == 0.75);
    CHECK_THROWS_AS(auc(s, labels_of(4, 0)), ValidationError);
    const std::vector<double> inf{0.1, 0.2, std::numeric_limits<double>::infinity(), 0.3};
    CHECK_THROWS_AS(auc(inf, y), ValidationError);
}

TEST_CASE("AUC matches the all-pairs count and ignores monotone transforms") {
    RngStream rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(29);
        std::vector<Label> y(n);
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i < 1 ? Label::HC : i < 2 ? Label::SZ : (rng.uniform() < 0.5 ? Label::HC : Label::SZ);
            s[i] = static_cast<double>(rng.below(6));  // coarse scores force ties
        }
        CHECK(auc(s, y) == brute_auc(s, y));
        std::vector<double> t(n);
        std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3 * v) - 7; });
        CHECK(auc(t, y) == auc(s, y));
    }
}

TEST_CASE("paired t-test") {
    const std::vector<double> a{0.7, 0.8, 0.75, 0.9, 0.6};
    CHECK(significance_test(a, a) == 0.5);
    std::vector<double> b = a;
    for (auto& v : b) v -= 1.0;
    CHECK(significance_test(a, b) == 0.0);
    CHECK(significance_test(b, a) == 1.0);

    // Differences with sample sd 1 and mean t / sqrt(k): tabulated quantiles.
    auto p_for = [](double t, std::size_t k) {
        std::vector<double> x(k), y(k, 0.0);
        double ss = 0;
        for (std::size_t i = 0; i < k; ++i) ss += std::pow(double(i) - (k - 1) / 2.0, 2);
        const double scale = std::sqrt(ss / (k - 1));
        for (std::size_t i = 0; i < k; ++i) x[i] = (double(i) - (k - 1) / 2.0) / scale + t / std::sqrt(double(k));
        return significance_test(x, y);
    };
    CHECK(p_for(2.132, 5) == doctest::Approx(0.05).epsilon(1e-3 / 0.05));
    CHECK(p_for(3.747, 5) == doctest::Approx(0.01).epsilon(1e-3 / 0.01));
    CHECK(p_for(1.895, 8) == doctest::Approx(0.05).epsilon(1e-3 / 0.05));
    CHECK(std::abs(p_for(-1.533, 5) - 0.9) < 1e-3);

    CHECK_THROWS_AS(significance_test(std::vector<double>{1.0}, std::vector<double>{0.0}), ValidationError);
    CHECK_THROWS_AS(significance_test(a, std::vector<double>{1.0, 2.0}), ValidationError);
}

TEST_CASE("phantom generation") {
    RngStream a(5), b(5);
    const PhantomSpec spec = small_phantom({1.0, 1.5});
    const MultimodalDataset d1 = phantom_generate(spec, a);
    const MultimodalDataset d2 = phantom_generate(spec, b);
    REQUIRE(d1.modality_count() == 2);
    CHECK(d1.subject_count() == 80);
    CHECK(d1.at(0).data.cols() == 300);
    CHECK(d1.at(0).data == d2.at(0).data);
    CHECK(d1.at(1).data == d2.at(1).data);
    CHECK(d1.at(0).count(Label::SZ) == 40);
    CHECK(d1.at(0).subject_ids == d1.at(1).subject_ids);

    PhantomSpec bad = spec;
    bad.effect_sizes = {-1.0, 0.0};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = spec;
    bad.m_per_modality = {300};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("standardizer") {
    RngStream rng(6);
    Matrix x = 3.0 * testing::random_matrix(rng, 50, 4);
    x.col(2).setConstant(7.0);
    const Standardizer s = Standardizer::fit(x);
    const Matrix z = s.apply(x);
    CHECK(column_mean(z).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(z.col(2).isZero(0));
    CHECK(z.col(0).squaredNorm() / 50 == doctest::Approx(1.0));  // population scale
}

TEST_CASE("experiment config JSON round trip") {
    ExperimentConfig c = quick_config();
    c.methods = {Method::MlpMvn, Method::Lda};
    c.mlp.transfer = TransferMode::InputOnly;
    c.transductive_ica = false;
    const ExperimentConfig back = parse_experiment_config(experiment_config_to_json(c));
    CHECK(back.c == c.c);
    CHECK(back.batch_spec.batches == 30);
    CHECK(back.mlp.fine_tune.epochs == 20);
    CHECK(back.mlp.transfer == TransferMode::InputOnly);
    CHECK_FALSE(back.transductive_ica);
    CHECK(back.methods == c.methods);
    CHECK(back.seed == 3);
    REQUIRE(back.phantom);
    CHECK(back.phantom->m_per_modality == c.phantom->m_per_modality);
    CHECK(experiment_config_to_json(back) == experiment_config_to_json(c));

    CHECK_THROWS_AS(parse_experiment_config("{"), ParseError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["svm"]})"), ValidationError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"folds": "eight"})"), ValidationError);
    CHECK(parse_experiment_config(R"({"rv_kind": "mvn"})").methods.size() == all_methods().size() - 1);
    try {
        parse_experiment_config(R"({"mlp": {"fine_tune": {"epochs": 5}}})");
        FAIL("nested unknown key accepted");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("'fine_tune' in mlp") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_experiment_config(R"({"fold": 4})"), ValidationError);
}

TEST_CASE("method tokens") {
    for (Method m : all_methods()) CHECK(parse_method(method_key(m)) == m);
    CHECK(method_name(Method::MlpMvn) == "MLP with MVN");
    CHECK(all_methods().size() == 7);
}

TEST_CASE("pre-training runs one step per batch") {
    RngStream rng(7);
    const MultimodalDataset data = phantom_generate(small_phantom({1.0, 1.5}), rng);
    std::vector<std::size_t> rows(80);
    std::iota(rows.begin(), rows.end(), 0);
    const Standardizer scaler = Standardizer::fit(data.at(0).data);
    PretrainConfig pc;
    pc.c = 8;
    pc.batch_spec = {10, 10, 100};
    RngStream a(8), b(8);
    const PretrainResult r1 = run_unimodal_pretraining(data.at(0), rows, scaler, nullptr, pc, a);
    const PretrainResult r2 = run_unimodal_pretraining(data.at(0), rows, scaler, nullptr, pc, b);
    CHECK(r1.steps == 100);
    CHECK(r1.consumed_batches.size() == 100);
    CHECK(r1.consumed_batches.back() == 99);
    for (std::size_t l = 0; l < r1.model.layer_count(); ++l) CHECK(r1.model.layer(l).weights == r2.model.layer(l).weights);
}

TEST_CASE("pre-trained unimodal net beats the permutation null on held-out subjects") {
    PhantomSpec spec;  // default phantom, modality B carries the larger effect
    RngStream rng(9);
    const MultimodalDataset data = phantom_generate(spec, rng);
    const LabeledDataset& b = data.at(1);
    std::vector<std::size_t> train, held;
    for (std::size_t i = 0; i < b.size(); ++i) (i % 2 ? held : train).push_back(i);
    const Standardizer scaler = Standardizer::fit(b.subset(train).data);
    PretrainConfig pc;
    pc.batch_spec = {10, 10, 1000};
    RngStream prng(10);
    const PretrainResult r = run_unimodal_pretraining(b, train, scaler, nullptr, pc, prng);
    const LabeledDataset test = b.subset(held);
    const double a = auc(predict_proba(r.model, std::vector<Matrix>{scaler.apply(test.data)}), test.labels);
    // Null AUC sd for n1 = n2 = 40 (Mann-Whitney): sqrt((n1 + n2 + 1) / (12 n1 n2)).
    const double null_sd = std::sqrt(81.0 / (12.0 * 40 * 40));
    CHECK(a > 0.5 + 3 * null_sd);
}

TEST_CASE("phantom effect sizes drive baseline AUC") {
    ExperimentConfig c;
    c.methods = {Method::Lda};
    c.folds = 8;
    c.seed = 11;

    c.phantom = small_phantom({0.0, 0.0});
    const ExperimentReport null_report = run_experiment(c);
    for (const auto& agg : null_report.aggregates()) {
        // Each fold's null AUC has sd ~0.13 with 5 + 5 test subjects; 8-fold mean within 3 sd.
        const double sd = std::sqrt(11.0 / (12.0 * 5 * 5)) / std::sqrt(8.0);
        CHECK(std::abs(agg.mean - 0.5) < 3 * sd);
    }

    c.phantom = small_phantom({3.0, 3.0}, 0.0);
    c.phantom->m_per_modality = {2000, 2000};
    for (const auto& agg : run_experiment(c).aggregates()) CHECK(agg.mean > 0.95);
}

TEST_CASE("experiment report structure, determinism and parallel folds") {
    ExperimentConfig c = quick_config();
    const ExperimentReport r = run_experiment(c);
    CHECK(r.modality_names == std::vector<std::string>{"A", "B"});
    const auto aggs = r.aggregates();
    CHECK(aggs.size() == 7 * 3);
    std::map<std::string, int> per_set;
    for (const auto& agg : aggs) {
        CHECK(agg.folds == 4);
        const auto folds = r.fold_aucs(agg.method, agg.modalities);
        REQUIRE(folds.size() == 4);
        const double mean = std::accumulate(folds.begin(), folds.end(), 0.0) / 4;
        double ss = 0;
        for (double v : folds) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            ss += (v - mean) * (v - mean);
        }
        CHECK(agg.mean == mean);
        CHECK(agg.std_dev == std::sqrt(ss / 3));
        ++per_set[agg.modalities];
    }
    CHECK(per_set["A"] == 7);
    CHECK(per_set["A+B"] == 7);

    const std::string csv = r.to_csv();
    CHECK(csv.rfind("method,modalities,fold,auc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 7 * 3 * 4);
    const std::string table = r.to_table();
    CHECK(table.find("MLP with MVN") != std::string::npos);
    CHECK(table.find("Nearest Neighbors") != std::string::npos);

    for (const auto& t : r.pretraining) {
        CHECK(t.single_pass);
        CHECK(t.labels_isolated);
        CHECK(t.steps == 30);
    }
    CHECK(r.pretraining.size() == 4 * 2 * 2);

    CHECK(run_experiment(c).to_csv() == csv);
    c.parallel_folds = 3;
    CHECK(run_experiment(c).to_csv() == csv);
}

TEST_CASE("inductive ICA and fold-stage error reporting") {
    ExperimentConfig c = quick_config();
    c.methods = {Method::MlpRejection};
    c.transductive_ica = false;
    c.evaluate_unimodal = false;
    const ExperimentReport r = run_experiment(c);
    CHECK(r.entries.size() == 4);

    c.c = 70;  // more components than a training fold can support
    try {
        run_experiment(c);
        FAIL("expected failure");
    } catch (const Error& e) {
        const std::string what = e.what();
        CHECK(what.find("fold 0") != std::string::npos);
        CHECK(what.find("mlp_rejection") != std::string::npos);
    }
}
