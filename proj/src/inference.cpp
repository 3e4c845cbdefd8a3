#include "emoloc/inference.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "emoloc/error.hpp"

namespace emoloc::inference {

ScoreMatrix matching_scores(const dcin::Model& model, const Episode& episode) {
    ad::Graph g;
    dcin::ModelVars vars = dcin::bind_model(model, g);
    dcin::Forward fwd = dcin::forward(g, vars, episode);
    const Tensor pv = dcin::classify(fwd.vL, dcin::Head::kVideo, vars.classifier).val();
    const Tensor ps = dcin::classify(fwd.subtitle, dcin::Head::kSubtitle, vars.classifier).val();

    ScoreMatrix m;
    m.episode_id = episode.id;
    m.scores = Tensor::zeros(pv.shape);
    for (size_t i = 0; i < pv.values.size(); ++i) {
        m.scores.values[i] = 0.5 * (pv.values[i] + ps.values[i]);
    }
    return m;
}

std::vector<Detection> detect(const ScoreMatrix& m, double gamma1, double gamma2) {
    if (gamma2 < 0.0 || gamma2 > gamma1 || gamma1 > 1.0) {
        throw ConfigError("detect: thresholds must satisfy 0 <= gamma2 <= gamma1 <= 1, got "
                          "gamma1=" + std::to_string(gamma1) + " gamma2=" +
                          std::to_string(gamma2));
    }
    const int t = m.scores.shape[0];
    const int classes = m.scores.cols();
    std::vector<Detection> out;
    for (int e = 0; e < classes; ++e) {
        int peak = 0;
        for (int i = 1; i < t; ++i) {
            if (m.scores.at(i, e) > m.scores.at(peak, e)) peak = i;
        }
        if (!(m.scores.at(peak, e) > gamma1)) continue;
        int start = peak, end = peak;
        while (start > 0 && m.scores.at(start - 1, e) > gamma2) --start;
        while (end + 1 < t && m.scores.at(end + 1, e) > gamma2) ++end;
        out.push_back(Detection{m.episode_id, e, start, end, m.scores.at(peak, e)});
    }
    return out;
}

std::vector<Detection> detect_all(const dcin::Model& model, const std::vector<Episode>& episodes,
                                  double gamma1, double gamma2) {
    std::vector<Detection> out;
    for (const Episode& ep : episodes) {
        std::vector<Detection> dets = detect(matching_scores(model, ep), gamma1, gamma2);
        out.insert(out.end(), dets.begin(), dets.end());
    }
    return out;
}

void write_detections(const std::vector<Detection>& detections, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open detections file for writing: " + path);
    char line[256];
    for (const Detection& d : detections) {
        std::snprintf(line, sizeof(line), "%s,%d,%d,%d,%.17g\n", d.episode_id.c_str(), d.emotion,
                      d.start, d.end, d.confidence);
        os << line;
    }
    if (!os) throw IoError("short write to detections file: " + path);
}

std::vector<Detection> read_detections(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open detections file: " + path);
    std::vector<Detection> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        Detection d;
        std::string field;
        try {
            if (!std::getline(ss, d.episode_id, ',')) throw std::invalid_argument("episode id");
            if (!std::getline(ss, field, ',')) throw std::invalid_argument("emotion");
            d.emotion = std::stoi(field);
            if (!std::getline(ss, field, ',')) throw std::invalid_argument("start");
            d.start = std::stoi(field);
            if (!std::getline(ss, field, ',')) throw std::invalid_argument("end");
            d.end = std::stoi(field);
            if (!std::getline(ss, field)) throw std::invalid_argument("confidence");
            d.confidence = std::stod(field);
        } catch (const std::exception&) {
            throw ParseError("detections file " + path + ": malformed record at line " +
                             std::to_string(line_no) + ": '" + line + "'");
        }
        if (d.start < 0 || d.end < d.start) {
            throw ParseError("detections file " + path + ": invalid interval at line " +
                             std::to_string(line_no));
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace emoloc::inference
