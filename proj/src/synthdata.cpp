#include "emoloc/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "emoloc/error.hpp"
#include "emoloc/rng.hpp"

namespace emoloc::synth {

void SynthConfig::validate() const {
    if (classes < 2) throw ConfigError("synth: classes must be >= 2");
    if (dim < 1) throw ConfigError("synth: dim must be >= 1");
    if (t_min < 1 || t_max < t_min) throw ConfigError("synth: bad episode length range");
    if (train_episodes < 1 || test_episodes < 1) {
        throw ConfigError("synth: episode counts must be >= 1");
    }
    if (events_min < 1 || events_max < events_min) throw ConfigError("synth: bad event count range");
    if (event_len_min < 1 || event_len_max < event_len_min) {
        throw ConfigError("synth: bad event length range");
    }
    if (event_len_min > t_min) {
        throw ConfigError("synth: minimum event length exceeds minimum episode length");
    }
    if (snr < 0.0) throw ConfigError("synth: snr must be >= 0");
    if (feature_scale <= 0.0) throw ConfigError("synth: feature scale must be > 0");
    if (subtitle_shift < 0) throw ConfigError("synth: subtitle shift must be >= 0");
    if (proto_corr < 0.0 || proto_corr > 1.0) throw ConfigError("synth: proto_corr must be in [0,1]");
}

std::string SynthConfig::summary() const {
    std::ostringstream os;
    os << "classes=" << classes << " dim=" << dim << " t_min=" << t_min << " t_max=" << t_max
       << " train_episodes=" << train_episodes << " test_episodes=" << test_episodes
       << " events_min=" << events_min << " events_max=" << events_max
       << " event_len_min=" << event_len_min << " event_len_max=" << event_len_max;
    char buf[96];
    std::snprintf(buf, sizeof(buf), " snr=%.17g", snr);
    os << buf;
    std::snprintf(buf, sizeof(buf), " feature_scale=%.17g", feature_scale);
    os << buf << " subtitle_shift=" << subtitle_shift;
    std::snprintf(buf, sizeof(buf), " proto_corr=%.17g", proto_corr);
    os << buf << " seed=" << seed;
    return os.str();
}

namespace {

struct Event {
    int emotion;
    int start, end;
};

bool overlaps(const Event& e, const std::vector<Event>& existing) {
    for (const Event& o : existing) {
        if (e.start <= o.end && o.start <= e.end) return true;
    }
    return false;
}

Episode make_episode(const SynthConfig& cfg, const std::vector<Tensor>& proto_v,
                     const std::vector<Tensor>& proto_s, const std::string& id, bool with_gt,
                     Rng& rng) {
    const int t = rng.uniform_int(cfg.t_min, cfg.t_max);
    const int n_events = rng.uniform_int(cfg.events_min, cfg.events_max);

    // Events are kept disjoint on the video timeline; an event that cannot
    // be placed after bounded retries is dropped.
    std::vector<Event> events;
    for (int k = 0; k < n_events; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const int len = rng.uniform_int(cfg.event_len_min, cfg.event_len_max);
            if (len > t) continue;  // re-drawn
            const int start = rng.uniform_int(0, t - len);
            Event ev{rng.uniform_int(0, cfg.classes - 1), start, start + len - 1};
            if (!overlaps(ev, events)) {
                events.push_back(ev);
                placed = true;
            }
        }
        if (!placed && events.empty()) {
            throw PreconditionError("synth: could not place any event in episode " + id +
                                    " (event length range incompatible with length " +
                                    std::to_string(t) + ")");
        }
    }

    Episode ep;
    ep.id = id;
    ep.video = Tensor::zeros({t, cfg.dim});
    ep.subtitle = Tensor::zeros({t, cfg.dim});
    for (double& v : ep.video.values) v = cfg.feature_scale * rng.normal();
    for (double& v : ep.subtitle.values) v = cfg.feature_scale * rng.normal();

    std::set<int> label_set;
    for (const Event& ev : events) {
        label_set.insert(ev.emotion);
        for (int i = ev.start; i <= ev.end; ++i) {
            for (int j = 0; j < cfg.dim; ++j) {
                ep.video.at(i, j) +=
                    cfg.snr * cfg.feature_scale * proto_v[static_cast<size_t>(ev.emotion)].at(j);
            }
        }
        const int shift = cfg.subtitle_shift == 0
                              ? 0
                              : rng.uniform_int(-cfg.subtitle_shift, cfg.subtitle_shift);
        const int s_start = std::clamp(ev.start + shift, 0, t - 1);
        const int s_end = std::clamp(ev.end + shift, 0, t - 1);
        for (int i = s_start; i <= s_end; ++i) {
            for (int j = 0; j < cfg.dim; ++j) {
                ep.subtitle.at(i, j) +=
                    cfg.snr * cfg.feature_scale * proto_s[static_cast<size_t>(ev.emotion)].at(j);
            }
        }
        if (with_gt) ep.gt[ev.emotion].push_back({ev.start, ev.end});
    }
    ep.labels.assign(label_set.begin(), label_set.end());
    ep.validate();
    return ep;
}

}  // namespace

GeneratedData generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    std::vector<Tensor> proto_v, proto_s;
    const double mix = std::sqrt(std::max(0.0, 1.0 - cfg.proto_corr * cfg.proto_corr));
    for (int e = 0; e < cfg.classes; ++e) {
        Tensor pv = Tensor::zeros({cfg.dim});
        Tensor ps = Tensor::zeros({cfg.dim});
        for (int j = 0; j < cfg.dim; ++j) pv.at(j) = rng.normal();
        for (int j = 0; j < cfg.dim; ++j) ps.at(j) = cfg.proto_corr * pv.at(j) + mix * rng.normal();
        proto_v.push_back(std::move(pv));
        proto_s.push_back(std::move(ps));
    }

    GeneratedData data;
    for (Dataset* split : {&data.train, &data.test}) {
        split->classes = cfg.classes;
        split->dim = cfg.dim;
        split->seed = cfg.seed;
        split->generator = cfg.summary();
    }
    char id[64];
    for (int i = 0; i < cfg.train_episodes; ++i) {
        std::snprintf(id, sizeof(id), "train-%06d", i);
        data.train.episodes.push_back(make_episode(cfg, proto_v, proto_s, id, false, rng));
    }
    for (int i = 0; i < cfg.test_episodes; ++i) {
        std::snprintf(id, sizeof(id), "test-%06d", i);
        data.test.episodes.push_back(make_episode(cfg, proto_v, proto_s, id, true, rng));
    }
    return data;
}

// ---- dataset container -------------------------------------------------------

namespace {

constexpr const char* kMagic = "EMOSET 1";

void write_matrix_rows(std::ofstream& os, const Tensor& m) {
    char buf[32];
    for (int i = 0; i < m.shape[0]; ++i) {
        for (int j = 0; j < m.shape[1]; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.at(i, j));
            if (j) os << ' ';
            os << buf;
        }
        os << '\n';
    }
}

struct LineReader {
    std::ifstream is;
    std::string path;
    int line_no = 0;

    explicit LineReader(const std::string& p) : is(p), path(p) {
        if (!is) throw IoError("cannot open dataset: " + p);
    }

    std::string next() {
        std::string line;
        if (!std::getline(is, line)) {
            throw ParseError("dataset " + path + ": unexpected end of file after line " +
                             std::to_string(line_no));
        }
        ++line_no;
        return line;
    }

    [[noreturn]] void fail(const std::string& what) {
        throw ParseError("dataset " + path + ": " + what + " at line " + std::to_string(line_no));
    }
};

long long parse_ll(LineReader& r, const std::string& s) {
    try {
        size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        r.fail("expected integer, got '" + s + "'");
    }
}

}  // namespace

void save(const Dataset& dataset, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open dataset for writing: " + path);
    os << kMagic << '\n';
    os << "classes " << dataset.classes << '\n';
    os << "dim " << dataset.dim << '\n';
    os << "seed " << dataset.seed << '\n';
    os << "gen " << dataset.generator << '\n';
    os << "episodes " << dataset.episodes.size() << '\n';
    for (const Episode& ep : dataset.episodes) {
        os << "episode " << ep.id << '\n';
        os << "len " << ep.length() << '\n';
        os << "labels";
        for (int l : ep.labels) os << ' ' << l;
        os << '\n';
        for (const auto& [label, intervals] : ep.gt) {
            for (const Interval& iv : intervals) {
                os << "interval " << label << ' ' << iv.start << ' ' << iv.end << '\n';
            }
        }
        os << "V\n";
        write_matrix_rows(os, ep.video);
        os << "S\n";
        write_matrix_rows(os, ep.subtitle);
        os << "end\n";
    }
    if (!os) throw IoError("short write to dataset: " + path);
}

Dataset load(const std::string& path) {
    LineReader r(path);
    if (r.next() != kMagic) r.fail("bad magic header (expected '" + std::string(kMagic) + "')");

    Dataset ds;
    auto header_field = [&r](const char* key) {
        std::string line = r.next();
        const std::string prefix = std::string(key) + " ";
        if (line.rfind(prefix, 0) != 0) r.fail("expected '" + std::string(key) + "' header");
        return line.substr(prefix.size());
    };
    ds.classes = static_cast<int>(parse_ll(r, header_field("classes")));
    ds.dim = static_cast<int>(parse_ll(r, header_field("dim")));
    ds.seed = static_cast<uint64_t>(parse_ll(r, header_field("seed")));
    ds.generator = header_field("gen");
    const long long count = parse_ll(r, header_field("episodes"));
    if (ds.classes < 2 || ds.dim < 1 || count < 0) r.fail("implausible header values");

    for (long long k = 0; k < count; ++k) {
        Episode ep;
        {
            std::string line = r.next();
            if (line.rfind("episode ", 0) != 0) r.fail("expected 'episode' record");
            ep.id = line.substr(8);
        }
        const int t = static_cast<int>(parse_ll(r, header_field("len")));
        if (t < 1) r.fail("episode length must be >= 1");
        {
            std::string line = r.next();
            if (line.rfind("labels", 0) != 0) r.fail("expected 'labels'");
            std::istringstream ss(line.substr(6));
            int v;
            while (ss >> v) {
                if (v < 0 || v >= ds.classes) r.fail("label out of range");
                ep.labels.push_back(v);
            }
            if (ep.labels.empty()) r.fail("episode has no labels");
        }
        std::string line = r.next();
        while (line.rfind("interval ", 0) == 0) {
            std::istringstream ss(line.substr(9));
            int label, start, end;
            if (!(ss >> label >> start >> end)) r.fail("malformed interval");
            if (label < 0 || label >= ds.classes || start < 0 || end < start || end >= t) {
                r.fail("interval out of range");
            }
            ep.gt[label].push_back({start, end});
            line = r.next();
        }
        if (line != "V") r.fail("expected 'V' block");
        auto read_matrix = [&]() {
            Tensor m = Tensor::zeros({t, ds.dim});
            for (int i = 0; i < t; ++i) {
                std::istringstream ss(r.next());
                for (int j = 0; j < ds.dim; ++j) {
                    if (!(ss >> m.at(i, j))) r.fail("malformed feature row");
                }
                double extra;
                if (ss >> extra) r.fail("feature row has too many values");
            }
            return m;
        };
        ep.video = read_matrix();
        if (r.next() != "S") r.fail("expected 'S' block");
        ep.subtitle = read_matrix();
        if (r.next() != "end") r.fail("expected 'end' of episode record");
        ep.validate();
        ds.episodes.push_back(std::move(ep));
    }
    return ds;
}

std::vector<inference::Detection> random_baseline(const Dataset& test, uint64_t seed) {
    Rng rng(seed);
    std::vector<inference::Detection> out;
    for (const Episode& ep : test.episodes) {
        const int t = ep.length();
        for (const auto& [label, intervals] : ep.gt) {
            if (intervals.empty()) continue;
            // Uniform over all t*(t+1)/2 valid intervals.
            const long long total = static_cast<long long>(t) * (t + 1) / 2;
            long long pick = static_cast<long long>(rng.uniform() * static_cast<double>(total));
            if (pick >= total) pick = total - 1;
            int start = 0;
            long long remaining = pick;
            while (remaining >= t - start) {
                remaining -= t - start;
                ++start;
            }
            const int end = start + static_cast<int>(remaining);
            out.push_back({ep.id, label, start, end, 1.0});
        }
    }
    return out;
}

}  // namespace emoloc::synth
