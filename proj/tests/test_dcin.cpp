#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "emoloc/checkpoint.hpp"
#include "emoloc/dcin.hpp"
#include "emoloc/error.hpp"
#include "emoloc/gradcheck.hpp"
#include "emoloc/rng.hpp"

using namespace emoloc;
using ad::Graph;
using ad::Value;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

Episode random_episode(int t, int d, Rng& rng) {
    Episode ep;
    ep.id = "ep";
    ep.video = random_tensor({t, d}, rng);
    ep.subtitle = random_tensor({t, d}, rng);
    ep.labels = {0};
    return ep;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    }
    return m;
}

// Direct double-loop oracle for the dependency-reasoning layer.
Tensor reasoning_oracle(const Tensor& c, const Tensor& w2) {
    const int t = c.shape[0], d = c.shape[1];
    Tensor out = c;
    for (int i = 0; i < t; ++i) {
        std::vector<double> alpha(static_cast<size_t>(t));
        double sum = 0.0;
        for (int j = 0; j < t; ++j) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += c.at(i, k) * c.at(j, k);
            alpha[static_cast<size_t>(j)] = std::exp(dot);
            sum += alpha[static_cast<size_t>(j)];
        }
        for (int j = 0; j < t; ++j) {
            const double a = alpha[static_cast<size_t>(j)] / sum;
            for (int r = 0; r < d; ++r) {
                double proj = 0.0;
                for (int k = 0; k < d; ++k) proj += w2.at(r, k) * c.at(j, k);
                out.at(i, r) += a * proj;
            }
        }
    }
    return out;
}

// Direct-summation oracle for gated integration.
struct GatedOracle {
    Tensor v_next, gates;
};
GatedOracle gated_oracle(const Tensor& v, const Tensor& s, const Tensor& c, const Tensor& w3,
                         const Tensor& b3) {
    const int t = v.shape[0], d = v.shape[1], tl = c.shape[0];
    GatedOracle out;
    out.v_next = Tensor::zeros({t, d});
    out.gates = Tensor::zeros({t, d});
    for (int i = 0; i < t; ++i) {
        std::vector<double> alpha(static_cast<size_t>(tl));
        double sum = 0.0;
        for (int j = 0; j < tl; ++j) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += (v.at(i, k) + s.at(i, k)) * c.at(j, k);
            alpha[static_cast<size_t>(j)] = std::exp(dot);
            sum += alpha[static_cast<size_t>(j)];
        }
        std::vector<double> m(static_cast<size_t>(d), 0.0);
        for (int j = 0; j < tl; ++j) {
            for (int k = 0; k < d; ++k) {
                m[static_cast<size_t>(k)] += alpha[static_cast<size_t>(j)] / sum * c.at(j, k);
            }
        }
        for (int r = 0; r < d; ++r) {
            double z = b3.at(r);
            for (int k = 0; k < d; ++k) z += w3.at(r, k) * v.at(i, k);
            for (int k = 0; k < d; ++k) z += w3.at(r, d + k) * m[static_cast<size_t>(k)];
            const double gate = 1.0 / (1.0 + std::exp(-z));
            out.gates.at(i, r) = gate;
            out.v_next.at(i, r) = (1.0 - gate) * v.at(i, r) + gate * m[static_cast<size_t>(r)];
        }
    }
    return out;
}

}  // namespace

TEST_CASE("temporal_context_conv") {
    dcin::DcinConfig cfg;
    cfg.dim = 3;
    cfg.classes = 2;
    cfg.layers = 1;
    dcin::Model model = dcin::Model::init(cfg, 1);

    SUBCASE("zero input stays zero under relu with zero bias") {
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        Value c = g.leaf(Tensor::zeros({6, 3}));
        Value out = dcin::temporal_context_conv(c, vars.layers[0], dcin::Activation::kRelu);
        CHECK(out.val() == Tensor::zeros({3, 3}));
    }
    SUBCASE("identity-tap kernel halves by picking even rows") {
        Graph g;
        Tensor kern = Tensor::zeros({1, 3, 1});
        kern.at(0, 1, 0) = 1.0;  // centre tap
        dcin::LayerVars lv;
        lv.conv_w = g.leaf(kern);
        lv.conv_b = g.leaf(Tensor::zeros({1}));
        Value x = g.leaf(Tensor({4, 1}, {1, 2, 3, 4}));
        Value out = dcin::temporal_context_conv(x, lv, dcin::Activation::kRelu);
        // Sliding-window oracle: position t covers input 2t with the centre tap.
        CHECK(out.val().values == std::vector<double>{1, 3});
    }
    SUBCASE("three stacked layers give the 16/8/4 pyramid on T=32") {
        dcin::DcinConfig deep = cfg;
        deep.layers = 3;
        dcin::Model m3 = dcin::Model::init(deep, 2);
        Rng rng(3);
        Episode ep = random_episode(32, 3, rng);
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(m3, g);
        dcin::Forward fwd = dcin::forward(g, vars, ep);
        REQUIRE(fwd.contexts.size() == 3);
        CHECK(fwd.contexts[0].val().shape[0] == 16);
        CHECK(fwd.contexts[1].val().shape[0] == 8);
        CHECK(fwd.contexts[2].val().shape[0] == 4);
    }
}

TEST_CASE("context_dependency_reasoning") {
    SUBCASE("single node with zero projection is the identity") {
        Graph g;
        Tensor c({1, 3}, {0.3, -0.2, 0.9});
        auto dr = dcin::context_dependency_reasoning(g.leaf(c), g.leaf(Tensor::zeros({3, 3})));
        CHECK(dr.attention.val().values == std::vector<double>{1.0});
        CHECK(dr.enhanced.val() == c);
    }
    SUBCASE("identical rows share attention evenly") {
        Graph g;
        Tensor c({2, 2}, {0.5, -1.0, 0.5, -1.0});
        Rng rng(4);
        auto dr = dcin::context_dependency_reasoning(g.leaf(c), g.leaf(random_tensor({2, 2}, rng)));
        for (double a : dr.attention.val().values) CHECK(a == doctest::Approx(0.5));
    }
    SUBCASE("random instance matches the double-loop oracle") {
        Graph g;
        Rng rng(5);
        Tensor c = random_tensor({3, 4}, rng);
        Tensor w2 = random_tensor({4, 4}, rng);
        auto dr = dcin::context_dependency_reasoning(g.leaf(c), g.leaf(w2));
        CHECK(max_abs_diff(dr.enhanced.val(), reasoning_oracle(c, w2)) < 1e-12);
    }
}

TEST_CASE("gated_context_integration") {
    SUBCASE("single context node is aggregated for every segment") {
        Graph g;
        Rng rng(6);
        Tensor v = random_tensor({4, 3}, rng);
        Tensor s = random_tensor({4, 3}, rng);
        Tensor c = random_tensor({1, 3}, rng);
        dcin::LayerVars lv;
        lv.gate_w = g.leaf(random_tensor({3, 6}, rng));
        lv.gate_b = g.leaf(random_tensor({3}, rng));
        auto gi = dcin::gated_context_integration(g.leaf(v), g.leaf(s), g.leaf(c), lv);
        for (int i = 0; i < 4; ++i) {
            for (int k = 0; k < 3; ++k) {
                CHECK(gi.aggregated.val().at(i, k) == doctest::Approx(c.at(0, k)));
            }
        }
    }
    SUBCASE("zero gate map mixes half and half") {
        Graph g;
        Rng rng(7);
        Tensor v = random_tensor({3, 2}, rng);
        Tensor s = random_tensor({3, 2}, rng);
        Tensor c = random_tensor({2, 2}, rng);
        dcin::LayerVars lv;
        lv.gate_w = g.leaf(Tensor::zeros({2, 4}));
        lv.gate_b = g.leaf(Tensor::zeros({2}));
        auto gi = dcin::gated_context_integration(g.leaf(v), g.leaf(s), g.leaf(c), lv);
        for (double gate : gi.gates.val().values) CHECK(gate == 0.5);
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 2; ++k) {
                const double want = 0.5 * v.at(i, k) + 0.5 * gi.aggregated.val().at(i, k);
                CHECK(gi.v_next.val().at(i, k) == doctest::Approx(want));
            }
        }
    }
    SUBCASE("random instance matches the direct-summation oracle") {
        Graph g;
        Rng rng(8);
        Tensor v = random_tensor({4, 3}, rng);
        Tensor s = random_tensor({4, 3}, rng);
        Tensor c = random_tensor({2, 3}, rng);
        Tensor w3 = random_tensor({3, 6}, rng);
        Tensor b3 = random_tensor({3}, rng);
        dcin::LayerVars lv;
        lv.gate_w = g.leaf(w3);
        lv.gate_b = g.leaf(b3);
        auto gi = dcin::gated_context_integration(g.leaf(v), g.leaf(s), g.leaf(c), lv);
        GatedOracle want = gated_oracle(v, s, c, w3, b3);
        CHECK(max_abs_diff(gi.v_next.val(), want.v_next) < 1e-12);
        CHECK(max_abs_diff(gi.gates.val(), want.gates) < 1e-12);
    }
    SUBCASE("gate convexity: v' lies between v and m") {
        Rng rng(9);
        for (int trial = 0; trial < 5; ++trial) {
            Graph g;
            Tensor v = random_tensor({5, 4}, rng);
            Tensor s = random_tensor({5, 4}, rng);
            Tensor c = random_tensor({3, 4}, rng);
            dcin::LayerVars lv;
            lv.gate_w = g.leaf(random_tensor({4, 8}, rng));
            lv.gate_b = g.leaf(random_tensor({4}, rng));
            auto gi = dcin::gated_context_integration(g.leaf(v), g.leaf(s), g.leaf(c), lv);
            for (int i = 0; i < 5; ++i) {
                for (int k = 0; k < 4; ++k) {
                    const double lo = std::min(v.at(i, k), gi.aggregated.val().at(i, k));
                    const double hi = std::max(v.at(i, k), gi.aggregated.val().at(i, k));
                    CHECK(gi.v_next.val().at(i, k) >= lo - 1e-15);
                    CHECK(gi.v_next.val().at(i, k) <= hi + 1e-15);
                }
            }
        }
    }
}

TEST_CASE("classify") {
    dcin::DcinConfig cfg;
    cfg.dim = 4;
    cfg.classes = 5;
    cfg.layers = 1;
    SUBCASE("zero parameters give the uniform distribution") {
        dcin::Model model = dcin::Model::init(cfg, 10);
        model.classifier.video_w = Tensor::zeros({5, 4});
        model.classifier.video_b = Tensor::zeros({5});
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        Rng rng(11);
        Value p = dcin::classify(g.leaf(random_tensor({3, 4}, rng)), dcin::Head::kVideo,
                                 vars.classifier);
        for (double v : p.val().values) CHECK(v == doctest::Approx(0.2));
    }
    SUBCASE("dominant bias logit wins") {
        dcin::Model model = dcin::Model::init(cfg, 12);
        model.classifier.video_w = Tensor::zeros({5, 4});
        model.classifier.video_b = Tensor::zeros({5});
        model.classifier.video_b.at(0) = 10.0;
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        Rng rng(13);
        Value p = dcin::classify(g.leaf(random_tensor({2, 4}, rng)), dcin::Head::kVideo,
                                 vars.classifier);
        CHECK(p.val().at(0, 0) > 0.99);
        CHECK(p.val().at(1, 0) > 0.99);
    }
    SUBCASE("rows sum to 1 within 1e-12") {
        dcin::Model model = dcin::Model::init(cfg, 14);
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        Rng rng(15);
        Value p = dcin::classify(g.leaf(random_tensor({6, 4}, rng, -3, 3)), dcin::Head::kSubtitle,
                                 vars.classifier);
        for (int i = 0; i < 6; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 5; ++j) sum += p.val().at(i, j);
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("context_sensitive_loss") {
    Graph g;
    SUBCASE("identical distributions pay the full margin per row") {
        Tensor p({4, 3}, {0.2, 0.3, 0.5, 0.1, 0.8, 0.1, 0.4, 0.4, 0.2, 0.6, 0.2, 0.2});
        Value loss = dcin::context_sensitive_loss(g.leaf(p), g.leaf(p), 0.5);
        CHECK(loss.val().values[0] == doctest::Approx(2.0));
    }
    SUBCASE("distances beyond the margin cost nothing") {
        Tensor a({2, 2}, {1.0, 0.0, 1.0, 0.0});
        Tensor b({2, 2}, {0.0, 1.0, 0.0, 1.0});
        Value loss = dcin::context_sensitive_loss(g.leaf(a), g.leaf(b), 0.5);
        CHECK(loss.val().values[0] == 0.0);
    }
}

TEST_CASE("dcin_forward") {
    SUBCASE("shape arithmetic at T=32, d=16, L=3") {
        dcin::DcinConfig cfg;
        cfg.dim = 16;
        cfg.classes = 6;
        cfg.layers = 3;
        dcin::Model model = dcin::Model::init(cfg, 20);
        Rng rng(21);
        Episode ep = random_episode(32, 16, rng);
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        dcin::Forward fwd = dcin::forward(g, vars, ep);
        CHECK(fwd.vL.val().shape == std::vector<int>{32, 16});
        CHECK(fwd.contexts[0].val().shape == std::vector<int>{16, 16});
        CHECK(fwd.contexts[1].val().shape == std::vector<int>{8, 16});
        CHECK(fwd.contexts[2].val().shape == std::vector<int>{4, 16});
    }
    SUBCASE("T=5, L=2 pads to 8, returns 5 rows, masks softmax to real data") {
        dcin::DcinConfig cfg;
        cfg.dim = 3;
        cfg.classes = 2;
        cfg.layers = 2;
        dcin::Model model = dcin::Model::init(cfg, 22);
        Rng rng(23);
        Episode ep5 = random_episode(5, 3, rng);
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        dcin::Forward fwd = dcin::forward(g, vars, ep5);
        CHECK(dcin::padded_length(5, 2) == 8);
        CHECK(fwd.vL.val().shape == std::vector<int>{5, 3});
        REQUIRE(fwd.contexts.size() == 2);
        CHECK(fwd.contexts[0].val().shape[0] == 3);  // ceil(5/2)
        CHECK(fwd.contexts[1].val().shape[0] == 2);  // ceil(5/4)

        // The coarse conv stream only sees zero rows where the padding sits,
        // so an episode literally extended with zero rows must produce the
        // same context values at the real-data positions.
        Episode ep8 = ep5;
        ep8.video = Tensor::zeros({8, 3});
        ep8.subtitle = Tensor::zeros({8, 3});
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 3; ++j) {
                ep8.video.at(i, j) = ep5.video.at(i, j);
                ep8.subtitle.at(i, j) = ep5.subtitle.at(i, j);
            }
        }
        Graph g8;
        dcin::ModelVars vars8 = dcin::bind_model(model, g8);
        dcin::Forward fwd8 = dcin::forward(g8, vars8, ep8);
        for (size_t l = 0; l < 2; ++l) {
            const Tensor& got = fwd.contexts[l].val();
            const Tensor& full = fwd8.contexts[l].val();
            for (int i = 0; i < got.shape[0]; ++i) {
                for (int j = 0; j < 3; ++j) CHECK(got.at(i, j) == full.at(i, j));
            }
        }
        // Attention over context positions derived only from real data sums to 1.
        for (const auto& attn : {fwd.attn_reason, fwd.attn_integrate}) {
            for (const Value& a : attn) {
                const Tensor& m = a.val();
                for (int i = 0; i < m.shape[0]; ++i) {
                    double sum = 0.0;
                    for (int j = 0; j < m.shape[1]; ++j) sum += m.at(i, j);
                    CHECK(std::abs(sum - 1.0) < 1e-12);
                }
            }
        }
    }
    SUBCASE("gate traces stay strictly inside (0,1)") {
        dcin::DcinConfig cfg;
        cfg.dim = 4;
        cfg.classes = 3;
        cfg.layers = 2;
        dcin::Model model = dcin::Model::init(cfg, 24);
        Rng rng(25);
        Episode ep = random_episode(11, 4, rng);
        dcin::Output out = dcin::run(model, ep);
        for (const Tensor& gates : out.gate_trace) {
            for (double v : gates.values) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
        }
    }
    SUBCASE("empty episode is rejected") {
        dcin::DcinConfig cfg;
        cfg.dim = 2;
        cfg.classes = 2;
        cfg.layers = 1;
        dcin::Model model = dcin::Model::init(cfg, 26);
        Episode ep;
        ep.id = "empty";
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        CHECK_THROWS_AS(dcin::forward(g, vars, ep), PreconditionError);
    }
    SUBCASE("padding machinery is inert when 2^L divides T") {
        dcin::DcinConfig cfg;
        cfg.dim = 3;
        cfg.classes = 2;
        cfg.layers = 2;
        dcin::Model model = dcin::Model::init(cfg, 27);
        Rng rng(28);
        Episode ep = random_episode(8, 3, rng);
        Graph g;
        dcin::ModelVars vars = dcin::bind_model(model, g);
        dcin::Forward fwd = dcin::forward(g, vars, ep);

        // Bit-identical to the same layer chain run without any
        // padding/validity bookkeeping.
        Graph gm;
        dcin::ModelVars vm = dcin::bind_model(model, gm);
        Value context = gm.leaf(ep.video);
        Value v_cur = gm.leaf(ep.video);
        Value s = gm.leaf(ep.subtitle);
        for (int l = 0; l < 2; ++l) {
            context = dcin::temporal_context_conv(context, vm.layers[static_cast<size_t>(l)],
                                                  cfg.activation);
            auto dr = dcin::context_dependency_reasoning(
                context, vm.layers[static_cast<size_t>(l)].reason_w);
            auto gi = dcin::gated_context_integration(v_cur, s, dr.enhanced,
                                                      vm.layers[static_cast<size_t>(l)]);
            v_cur = gi.v_next;
        }
        CHECK(fwd.vL.val() == v_cur.val());
    }
}

TEST_CASE("residual identity: zero projection makes reasoning the identity") {
    Graph g;
    Rng rng(30);
    Tensor c = random_tensor({5, 3}, rng);
    auto dr = dcin::context_dependency_reasoning(g.leaf(c), g.leaf(Tensor::zeros({3, 3})));
    CHECK(dr.enhanced.val() == c);
}

TEST_CASE("end-to-end differentiability of forward + classify + hinge") {
    dcin::DcinConfig cfg;
    cfg.dim = 4;
    cfg.classes = 3;
    cfg.layers = 2;
    dcin::Model model = dcin::Model::init(cfg, 31);
    Rng rng(32);
    Episode ep = random_episode(8, 4, rng);

    auto build = [&](Graph& g, const std::vector<Value>& leaves) {
        dcin::ModelVars vars = dcin::bind_model(cfg, leaves);
        dcin::Forward fwd = dcin::forward(g, vars, ep);
        Value p0 = dcin::classify(fwd.v0, dcin::Head::kVideo, vars.classifier);
        Value pL = dcin::classify(fwd.vL, dcin::Head::kVideo, vars.classifier);
        return dcin::context_sensitive_loss(p0, pL, cfg.margin);
    };
    auto report = ad::finite_diff_check(model.parameters(), build);
    MESSAGE("dcin end-to-end max rel err: ", report.max_rel_err);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round trip") {
    dcin::DcinConfig cfg;
    cfg.dim = 5;
    cfg.classes = 4;
    cfg.layers = 2;
    cfg.margin = 0.25;
    dcin::Model model = dcin::Model::init(cfg, 33);
    const std::string path = "ckpt_roundtrip.bin";
    dcin::save_checkpoint(model, path);
    dcin::Model loaded = dcin::load_checkpoint(path);

    CHECK(loaded.config.dim == cfg.dim);
    CHECK(loaded.config.classes == cfg.classes);
    CHECK(loaded.config.layers == cfg.layers);
    CHECK(loaded.config.margin == cfg.margin);
    auto a = model.parameters();
    auto b = loaded.parameters();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

    SUBCASE("truncated file is a parse error") {
        FILE* f = std::fopen(path.c_str(), "rb");
        REQUIRE(f != nullptr);
        char buf[64];
        const size_t got = std::fread(buf, 1, sizeof(buf), f);
        std::fclose(f);
        f = std::fopen("ckpt_truncated.bin", "wb");
        std::fwrite(buf, 1, got, f);
        std::fclose(f);
        CHECK_THROWS_AS(dcin::load_checkpoint("ckpt_truncated.bin"), ParseError);
    }
}
