#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "emoloc/error.hpp"
#include "emoloc/graph.hpp"
#include "emoloc/inference.hpp"
#include "emoloc/rng.hpp"

using namespace emoloc;
using inference::Detection;
using inference::ScoreMatrix;

namespace {

ScoreMatrix matrix_from(const std::vector<std::vector<double>>& rows) {
    ScoreMatrix m;
    m.episode_id = "ep";
    const int t = static_cast<int>(rows.size());
    const int n = static_cast<int>(rows[0].size());
    m.scores = Tensor::zeros({t, n});
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < n; ++j) m.scores.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    return m;
}

// Brute-force oracle: the maximal run of segments with score > gamma2 that
// contains the smallest argmax of the column, for every column whose best
// score exceeds gamma1.
std::vector<Detection> detect_oracle(const ScoreMatrix& m, double g1, double g2) {
    std::vector<Detection> out;
    const int t = m.scores.shape[0], n = m.scores.cols();
    for (int e = 0; e < n; ++e) {
        int peak = 0;
        for (int i = 1; i < t; ++i) {
            if (m.scores.at(i, e) > m.scores.at(peak, e)) peak = i;
        }
        if (!(m.scores.at(peak, e) > g1)) continue;
        // Enumerate maximal runs with score > g2 and take the one holding the peak.
        int start = -1;
        for (int i = 0; i <= t; ++i) {
            const bool above = i < t && m.scores.at(i, e) > g2;
            if (above && start < 0) start = i;
            if (!above && start >= 0) {
                if (peak >= start && peak <= i - 1) {
                    out.push_back({m.episode_id, e, start, i - 1, m.scores.at(peak, e)});
                }
                start = -1;
            }
        }
    }
    return out;
}

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].episode_id != b[i].episode_id || a[i].emotion != b[i].emotion ||
            a[i].start != b[i].start || a[i].end != b[i].end ||
            a[i].confidence != b[i].confidence) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("detect walks the grouping rule") {
    ScoreMatrix m = matrix_from({{0.1}, {0.6}, {0.7}, {0.65}, {0.1}});
    auto dets = inference::detect(m, 0.5, 0.5);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].emotion == 0);
    CHECK(dets[0].start == 1);
    CHECK(dets[0].end == 3);
    CHECK(dets[0].confidence == 0.7);
}

TEST_CASE("detect returns nothing below the selection threshold") {
    ScoreMatrix m = matrix_from({{0.2, 0.3}, {0.1, 0.25}, {0.3, 0.1}});
    CHECK(inference::detect(m, 0.5, 0.2).empty());
}

TEST_CASE("detect validates its thresholds") {
    ScoreMatrix m = matrix_from({{0.5}});
    CHECK_THROWS_AS(inference::detect(m, 0.3, 0.6), ConfigError);
    CHECK_THROWS_AS(inference::detect(m, 1.4, 0.2), ConfigError);
}

TEST_CASE("detect matches the brute-force oracle on 500 random matrices") {
    Rng rng(80);
    for (int trial = 0; trial < 500; ++trial) {
        const int t = rng.uniform_int(1, 12);
        const int n = rng.uniform_int(1, 5);
        ScoreMatrix m;
        m.episode_id = "ep" + std::to_string(trial);
        m.scores = Tensor::zeros({t, n});
        for (double& v : m.scores.values) v = rng.uniform(0.0, 1.0);
        const double g2 = rng.uniform(0.0, 0.9);
        const double g1 = g2 + rng.uniform(0.0, 1.0 - g2);
        auto got = inference::detect(m, g1, g2);
        auto want = detect_oracle(m, g1, g2);
        REQUIRE(same_detections(got, want));
    }
}

TEST_CASE("detect invariants") {
    Rng rng(81);
    for (int trial = 0; trial < 100; ++trial) {
        const int t = rng.uniform_int(2, 10);
        ScoreMatrix m;
        m.episode_id = "ep";
        m.scores = Tensor::zeros({t, 3});
        for (double& v : m.scores.values) v = rng.uniform(0.0, 1.0);
        const double g2 = rng.uniform(0.0, 0.5);
        const double g1 = g2 + rng.uniform(0.0, 0.4);
        auto dets = inference::detect(m, g1, g2);

        SUBCASE("") {}  // keep doctest quiet about empty bodies
        // Each interval holds its argmax and only >gamma2 scores; the
        // neighbours just outside do not qualify.
        for (const Detection& d : dets) {
            int peak = 0;
            for (int i = 1; i < t; ++i) {
                if (m.scores.at(i, d.emotion) > m.scores.at(peak, d.emotion)) peak = i;
            }
            CHECK(d.start <= peak);
            CHECK(peak <= d.end);
            for (int i = d.start; i <= d.end; ++i) CHECK(m.scores.at(i, d.emotion) > g2);
            if (d.start > 0) CHECK(m.scores.at(d.start - 1, d.emotion) <= g2);
            if (d.end + 1 < t) CHECK(m.scores.at(d.end + 1, d.emotion) <= g2);
        }
        // At most one detection per emotion.
        std::vector<int> seen;
        for (const Detection& d : dets) {
            CHECK(std::count(seen.begin(), seen.end(), d.emotion) == 0);
            seen.push_back(d.emotion);
        }
        // Raising gamma2 never widens, raising gamma1 never adds.
        auto tighter = inference::detect(m, g1, std::min(g1, g2 + 0.1));
        CHECK(tighter.size() <= dets.size());
        for (const Detection& td : tighter) {
            for (const Detection& d : dets) {
                if (d.emotion == td.emotion) {
                    CHECK(td.start >= d.start);
                    CHECK(td.end <= d.end);
                }
            }
        }
        auto fewer = inference::detect(m, std::min(1.0, g1 + 0.1), g2);
        CHECK(fewer.size() <= dets.size());
    }
}

TEST_CASE("matching_scores averages the two classifier heads") {
    dcin::DcinConfig cfg;
    cfg.dim = 4;
    cfg.classes = 3;
    cfg.layers = 2;
    dcin::Model model = dcin::Model::init(cfg, 82);
    Rng rng(83);
    Episode ep;
    ep.id = "ep";
    ep.video = Tensor::zeros({6, 4});
    ep.subtitle = Tensor::zeros({6, 4});
    for (double& v : ep.video.values) v = rng.uniform(-1, 1);
    for (double& v : ep.subtitle.values) v = rng.uniform(-1, 1);
    ep.labels = {0};

    ScoreMatrix m = inference::matching_scores(model, ep);
    CHECK(m.scores.shape == std::vector<int>{6, 3});
    for (double v : m.scores.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // Recompute the average from the two classify outputs directly.
    ad::Graph g;
    dcin::ModelVars vars = dcin::bind_model(model, g);
    dcin::Forward fwd = dcin::forward(g, vars, ep);
    Tensor pv = dcin::classify(fwd.vL, dcin::Head::kVideo, vars.classifier).val();
    Tensor ps = dcin::classify(fwd.subtitle, dcin::Head::kSubtitle, vars.classifier).val();
    for (size_t i = 0; i < pv.values.size(); ++i) {
        CHECK(m.scores.values[i] == 0.5 * (pv.values[i] + ps.values[i]));
    }
}

TEST_CASE("matching_scores on a uniform model is exactly 1/N") {
    dcin::DcinConfig cfg;
    cfg.dim = 4;
    cfg.classes = 5;
    cfg.layers = 1;
    dcin::Model model = dcin::Model::init(cfg, 84);
    model.classifier.video_w = Tensor::zeros({5, 4});
    model.classifier.video_b = Tensor::zeros({5});
    model.classifier.subtitle_w = Tensor::zeros({5, 4});
    model.classifier.subtitle_b = Tensor::zeros({5});
    Rng rng(85);
    Episode ep;
    ep.id = "ep";
    ep.video = Tensor::zeros({4, 4});
    ep.subtitle = Tensor::zeros({4, 4});
    for (double& v : ep.video.values) v = rng.uniform(-1, 1);
    for (double& v : ep.subtitle.values) v = rng.uniform(-1, 1);
    ep.labels = {0};
    ScoreMatrix m = inference::matching_scores(model, ep);
    for (double v : m.scores.values) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("detections round-trip through the text format") {
    std::vector<Detection> dets = {{"ep-1", 0, 2, 5, 0.75},
                                   {"ep-1", 2, 0, 0, 0.3333333333333333},
                                   {"ep-2", 1, 7, 9, 0.9999999999999}};
    inference::write_detections(dets, "dets_roundtrip.txt");
    auto loaded = inference::read_detections("dets_roundtrip.txt");
    REQUIRE(same_detections(dets, loaded));

    SUBCASE("malformed lines carry the line number") {
        FILE* f = std::fopen("dets_bad.txt", "w");
        std::fputs("ep,0,1,2,0.5\nep,xx,1\n", f);
        std::fclose(f);
        bool threw = false;
        try {
            inference::read_detections("dets_bad.txt");
        } catch (const ParseError& e) {
            threw = true;
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
        CHECK(threw);
    }
}
