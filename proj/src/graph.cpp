#include "emoloc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "emoloc/error.hpp"

namespace emoloc::ad {

const Tensor& Value::val() const { return graph->value(id); }

double Value::scalar() const {
    const Tensor& t = val();
    if (t.numel() != 1) {
        throw ContractError("scalar() on tensor of shape " + t.shape_str());
    }
    return t.values[0];
}

Value Graph::leaf(Tensor t) {
    nodes.push_back(Node{std::move(t), {}, nullptr});
    return Value{this, static_cast<int>(nodes.size()) - 1};
}

std::vector<Tensor> Graph::backward(Value loss) {
    if (loss.graph != this || loss.id < 0 || loss.id >= size()) {
        throw ContractError("backward: loss does not belong to this record");
    }
    if (nodes[static_cast<size_t>(loss.id)].value.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " +
                            nodes[static_cast<size_t>(loss.id)].value.shape_str());
    }
    grads.assign(nodes.size(), Tensor{});
    for (size_t i = 0; i < nodes.size(); ++i) {
        grads[i] = Tensor::zeros(nodes[i].value.shape);
    }
    grads[static_cast<size_t>(loss.id)].values[0] = 1.0;

    // Creation order is already topological, so one reverse scan visits
    // every node exactly once. `live` prunes nodes the loss cannot reach.
    std::vector<char> live(nodes.size(), 0);
    live[static_cast<size_t>(loss.id)] = 1;
    for (int id = loss.id; id >= 0; --id) {
        if (!live[static_cast<size_t>(id)]) continue;
        const Node& n = nodes[static_cast<size_t>(id)];
        for (int in : n.inputs) live[static_cast<size_t>(in)] = 1;
        if (n.backward) n.backward(*this, id);
    }
    return std::move(grads);
}

// ---- helpers -----------------------------------------------------------

namespace {

Graph* common_graph(Value a, Value b) {
    if (a.graph == nullptr || a.graph != b.graph) {
        throw ContractError("operands belong to different computation records");
    }
    return a.graph;
}

Value make(Graph& g, Tensor value, std::vector<int> inputs,
           std::function<void(Graph&, int)> backward) {
    g.nodes.push_back(Graph::Node{std::move(value), std::move(inputs), std::move(backward)});
    return Value{&g, static_cast<int>(g.nodes.size()) - 1};
}

void accumulate(Tensor& dst, const Tensor& src) {
    for (size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
}

void require_2d(const char* op, const Tensor& t) {
    if (t.ndim() != 2) {
        throw DimensionError(std::string(op) + ": expected 2-d tensor, got " + t.shape_str());
    }
}

}  // namespace

// ---- elementwise -------------------------------------------------------

Value add(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    check_same_shape("add", a.val(), b.val());
    Tensor out = a.val();
    accumulate(out, b.val());
    return make(g, std::move(out), {a.id, b.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        accumulate(g.grads[static_cast<size_t>(n.inputs[0])], g.grads[static_cast<size_t>(self)]);
        accumulate(g.grads[static_cast<size_t>(n.inputs[1])], g.grads[static_cast<size_t>(self)]);
    });
}

Value sub(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    check_same_shape("sub", a.val(), b.val());
    Tensor out = a.val();
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.val().values[i];
    return make(g, std::move(out), {a.id, b.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        accumulate(g.grads[static_cast<size_t>(n.inputs[0])], go);
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
        for (size_t i = 0; i < gb.values.size(); ++i) gb.values[i] -= go.values[i];
    });
}

Value mul(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    check_same_shape("mul", a.val(), b.val());
    Tensor out = a.val();
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] *= b.val().values[i];
    return make(g, std::move(out), {a.id, b.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        const Tensor& av = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& bv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
        Tensor& ga = g.grads[static_cast<size_t>(n.inputs[0])];
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
        for (size_t i = 0; i < go.values.size(); ++i) {
            ga.values[i] += go.values[i] * bv.values[i];
            gb.values[i] += go.values[i] * av.values[i];
        }
    });
}

Value div(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    check_same_shape("div", a.val(), b.val());
    Tensor out = a.val();
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] /= b.val().values[i];
    return make(g, std::move(out), {a.id, b.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        const Tensor& av = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& bv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
        Tensor& ga = g.grads[static_cast<size_t>(n.inputs[0])];
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
        for (size_t i = 0; i < go.values.size(); ++i) {
            double inv = 1.0 / bv.values[i];
            ga.values[i] += go.values[i] * inv;
            gb.values[i] -= go.values[i] * av.values[i] * inv * inv;
        }
    });
}

Value scale(Value x, double c) {
    Graph& g = *x.graph;
    Tensor out = x.val();
    for (double& v : out.values) v *= c;
    return make(g, std::move(out), {x.id}, [c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (size_t i = 0; i < gx.values.size(); ++i) gx.values[i] += c * go.values[i];
    });
}

Value add_scalar(Value x, double c) {
    Graph& g = *x.graph;
    Tensor out = x.val();
    for (double& v : out.values) v += c;
    return make(g, std::move(out), {x.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        accumulate(g.grads[static_cast<size_t>(n.inputs[0])], g.grads[static_cast<size_t>(self)]);
    });
}

Value sigmoid(Value x) {
    Graph& g = *x.graph;
    Tensor out = x.val();
    for (double& v : out.values) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return make(g, std::move(out), {x.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& y = n.value;
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (size_t i = 0; i < gx.values.size(); ++i) {
            gx.values[i] += go.values[i] * y.values[i] * (1.0 - y.values[i]);
        }
    });
}

Value relu(Value x) {
    Graph& g = *x.graph;
    Tensor out = x.val();
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return make(g, std::move(out), {x.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& xv = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (size_t i = 0; i < gx.values.size(); ++i) {
            if (xv.values[i] > 0.0) gx.values[i] += go.values[i];
        }
    });
}

Value log(Value x) {
    Graph& g = *x.graph;
    Tensor out = x.val();
    for (double& v : out.values) v = std::log(v);
    return make(g, std::move(out), {x.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& xv = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (size_t i = 0; i < gx.values.size(); ++i) gx.values[i] += go.values[i] / xv.values[i];
    });
}

// ---- linear algebra ----------------------------------------------------

Value affine(Value x, Value w, Value bias) {
    Graph& g = *common_graph(x, w);
    common_graph(x, bias);
    require_2d("affine", x.val());
    require_2d("affine", w.val());
    const int a = x.val().shape[0], b = x.val().shape[1];
    const int c = w.val().shape[0];
    if (w.val().shape[1] != b) {
        throw DimensionError("affine: inner dimensions disagree, x " + x.val().shape_str() +
                             " vs w " + w.val().shape_str());
    }
    if (bias.val().numel() != c) {
        throw DimensionError("affine: bias " + bias.val().shape_str() + " does not match w " +
                             w.val().shape_str());
    }
    Tensor out = Tensor::zeros({a, c});
    {
        const Tensor& xv = x.val();
        const Tensor& wv = w.val();
        const Tensor& bv = bias.val();
        for (int i = 0; i < a; ++i) {
            for (int j = 0; j < c; ++j) {
                double s = bv.values[static_cast<size_t>(j)];
                for (int k = 0; k < b; ++k) s += xv.at(i, k) * wv.at(j, k);
                out.at(i, j) = s;
            }
        }
    }
    return make(g, std::move(out), {x.id, w.id, bias.id}, [a, b, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        const Tensor& xv = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& wv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        Tensor& gw = g.grads[static_cast<size_t>(n.inputs[1])];
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[2])];
        for (int i = 0; i < a; ++i) {
            for (int j = 0; j < c; ++j) {
                const double go_ij = go.at(i, j);
                gb.values[static_cast<size_t>(j)] += go_ij;
                for (int k = 0; k < b; ++k) {
                    gx.at(i, k) += go_ij * wv.at(j, k);
                    gw.at(j, k) += go_ij * xv.at(i, k);
                }
            }
        }
    });
}

Value matmul(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    require_2d("matmul", a.val());
    require_2d("matmul", b.val());
    const int r = a.val().shape[0], m = a.val().shape[1], c = b.val().shape[1];
    if (b.val().shape[0] != m) {
        throw DimensionError("matmul: inner dimensions disagree, " + a.val().shape_str() + " vs " +
                             b.val().shape_str());
    }
    Tensor out = Tensor::zeros({r, c});
    {
        const Tensor& av = a.val();
        const Tensor& bv = b.val();
        for (int i = 0; i < r; ++i) {
            for (int k = 0; k < m; ++k) {
                const double aik = av.at(i, k);
                if (aik == 0.0) continue;
                for (int j = 0; j < c; ++j) out.at(i, j) += aik * bv.at(k, j);
            }
        }
    }
    return make(g, std::move(out), {a.id, b.id}, [r, m, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        const Tensor& av = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& bv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
        Tensor& ga = g.grads[static_cast<size_t>(n.inputs[0])];
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                const double go_ij = go.at(i, j);
                if (go_ij == 0.0) continue;
                for (int k = 0; k < m; ++k) {
                    ga.at(i, k) += go_ij * bv.at(k, j);
                    gb.at(k, j) += go_ij * av.at(i, k);
                }
            }
        }
    });
}

Value matmul_nt(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    require_2d("matmul_nt", a.val());
    require_2d("matmul_nt", b.val());
    const int r = a.val().shape[0], m = a.val().shape[1], c = b.val().shape[0];
    if (b.val().shape[1] != m) {
        throw DimensionError("matmul_nt: inner dimensions disagree, " + a.val().shape_str() +
                             " vs " + b.val().shape_str());
    }
    Tensor out = Tensor::zeros({r, c});
    {
        const Tensor& av = a.val();
        const Tensor& bv = b.val();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                double s = 0.0;
                for (int k = 0; k < m; ++k) s += av.at(i, k) * bv.at(j, k);
                out.at(i, j) = s;
            }
        }
    }
    return make(g, std::move(out), {a.id, b.id}, [r, m, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        const Tensor& av = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& bv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
        Tensor& ga = g.grads[static_cast<size_t>(n.inputs[0])];
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                const double go_ij = go.at(i, j);
                if (go_ij == 0.0) continue;
                for (int k = 0; k < m; ++k) {
                    ga.at(i, k) += go_ij * bv.at(j, k);
                    gb.at(j, k) += go_ij * av.at(i, k);
                }
            }
        }
    });
}

Value transpose(Value x) {
    Graph& g = *x.graph;
    require_2d("transpose", x.val());
    const int r = x.val().shape[0], c = x.val().shape[1];
    Tensor out = Tensor::zeros({c, r});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) out.at(j, i) = x.val().at(i, j);
    }
    return make(g, std::move(out), {x.id}, [r, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) gx.at(i, j) += go.at(j, i);
        }
    });
}

// ---- temporal convolution ----------------------------------------------

Value conv1d_stride2(Value x, Value kernels, Value bias) {
    Graph& g = *common_graph(x, kernels);
    common_graph(x, bias);
    require_2d("conv1d_stride2", x.val());
    if (kernels.val().ndim() != 3) {
        throw DimensionError("conv1d_stride2: kernels must be 3-d, got " +
                             kernels.val().shape_str());
    }
    const int t = x.val().shape[0], d_in = x.val().shape[1];
    const int d_out = kernels.val().shape[0], k = kernels.val().shape[1];
    if (t % 2 != 0) {
        throw PreconditionError("conv1d_stride2: temporal length must be even, got " +
                                std::to_string(t));
    }
    if (k % 2 == 0) {
        throw ConfigError("conv1d_stride2: kernel width must be odd, got " + std::to_string(k));
    }
    if (kernels.val().shape[2] != d_in) {
        throw DimensionError("conv1d_stride2: kernels " + kernels.val().shape_str() +
                             " do not match input " + x.val().shape_str());
    }
    if (bias.val().numel() != d_out) {
        throw DimensionError("conv1d_stride2: bias " + bias.val().shape_str() +
                             " does not match kernels " + kernels.val().shape_str());
    }
    const int pad = (k - 1) / 2;
    const int t_out = t / 2;
    Tensor out = Tensor::zeros({t_out, d_out});
    {
        const Tensor& xv = x.val();
        const Tensor& kv = kernels.val();
        const Tensor& bv = bias.val();
        for (int to = 0; to < t_out; ++to) {
            for (int o = 0; o < d_out; ++o) {
                double s = bv.values[static_cast<size_t>(o)];
                for (int tap = 0; tap < k; ++tap) {
                    const int ti = 2 * to + tap - pad;
                    if (ti < 0 || ti >= t) continue;
                    for (int c = 0; c < d_in; ++c) s += xv.at(ti, c) * kv.at(o, tap, c);
                }
                out.at(to, o) = s;
            }
        }
    }
    return make(g, std::move(out), {x.id, kernels.id, bias.id},
                [t, d_in, d_out, k, pad, t_out](Graph& g, int self) {
                    const auto& n = g.nodes[static_cast<size_t>(self)];
                    const Tensor& go = g.grads[static_cast<size_t>(self)];
                    const Tensor& xv = g.nodes[static_cast<size_t>(n.inputs[0])].value;
                    const Tensor& kv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
                    Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
                    Tensor& gk = g.grads[static_cast<size_t>(n.inputs[1])];
                    Tensor& gb = g.grads[static_cast<size_t>(n.inputs[2])];
                    for (int to = 0; to < t_out; ++to) {
                        for (int o = 0; o < d_out; ++o) {
                            const double go_to = go.at(to, o);
                            if (go_to == 0.0) continue;
                            gb.values[static_cast<size_t>(o)] += go_to;
                            for (int tap = 0; tap < k; ++tap) {
                                const int ti = 2 * to + tap - pad;
                                if (ti < 0 || ti >= t) continue;
                                for (int c = 0; c < d_in; ++c) {
                                    gx.at(ti, c) += go_to * kv.at(o, tap, c);
                                    gk.at(o, tap, c) += go_to * xv.at(ti, c);
                                }
                            }
                        }
                    }
                });
}

// ---- softmax -----------------------------------------------------------

Value softmax_rows(Value x) {
    Graph& g = *x.graph;
    require_2d("softmax_rows", x.val());
    const int r = x.val().shape[0], c = x.val().shape[1];
    Tensor out = Tensor::zeros({r, c});
    {
        const Tensor& xv = x.val();
        for (int i = 0; i < r; ++i) {
            double mx = xv.at(i, 0);
            for (int j = 1; j < c; ++j) mx = std::max(mx, xv.at(i, j));
            double sum = 0.0;
            for (int j = 0; j < c; ++j) {
                const double e = std::exp(xv.at(i, j) - mx);
                out.at(i, j) = e;
                sum += e;
            }
            for (int j = 0; j < c; ++j) out.at(i, j) /= sum;
        }
    }
    return make(g, std::move(out), {x.id}, [r, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& y = n.value;
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (int i = 0; i < r; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += go.at(i, j) * y.at(i, j);
            for (int j = 0; j < c; ++j) gx.at(i, j) += y.at(i, j) * (go.at(i, j) - dot);
        }
    });
}

// ---- shape ops ---------------------------------------------------------

Value concat_last_dim(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    require_2d("concat_last_dim", a.val());
    require_2d("concat_last_dim", b.val());
    const int r = a.val().shape[0], ca = a.val().shape[1], cb = b.val().shape[1];
    if (b.val().shape[0] != r) {
        throw DimensionError("concat_last_dim: row counts disagree, " + a.val().shape_str() +
                             " vs " + b.val().shape_str());
    }
    Tensor out = Tensor::zeros({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) out.at(i, j) = a.val().at(i, j);
        for (int j = 0; j < cb; ++j) out.at(i, ca + j) = b.val().at(i, j);
    }
    return make(g, std::move(out), {a.id, b.id}, [r, ca, cb](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& ga = g.grads[static_cast<size_t>(n.inputs[0])];
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < ca; ++j) ga.at(i, j) += go.at(i, j);
            for (int j = 0; j < cb; ++j) gb.at(i, j) += go.at(i, ca + j);
        }
    });
}

Value slice_rows(Value x, int row_begin, int row_end) {
    Graph& g = *x.graph;
    require_2d("slice_rows", x.val());
    const int r = x.val().shape[0], c = x.val().shape[1];
    if (row_begin < 0 || row_end > r || row_begin >= row_end) {
        throw PreconditionError("slice_rows: range [" + std::to_string(row_begin) + ", " +
                                std::to_string(row_end) + ") invalid for " + x.val().shape_str());
    }
    Tensor out = Tensor::zeros({row_end - row_begin, c});
    for (int i = row_begin; i < row_end; ++i) {
        for (int j = 0; j < c; ++j) out.at(i - row_begin, j) = x.val().at(i, j);
    }
    return make(g, std::move(out), {x.id}, [row_begin, row_end, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (int i = row_begin; i < row_end; ++i) {
            for (int j = 0; j < c; ++j) gx.at(i, j) += go.at(i - row_begin, j);
        }
    });
}

Value stack_scalars(Graph& g, const std::vector<Value>& xs) {
    if (xs.empty()) throw PreconditionError("stack_scalars: empty input");
    std::vector<int> ids;
    Tensor out = Tensor::zeros({1, static_cast<int>(xs.size())});
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].graph != &g) throw ContractError("stack_scalars: foreign operand");
        out.values[i] = xs[i].scalar();
        ids.push_back(xs[i].id);
    }
    return make(g, std::move(out), std::move(ids), [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        for (size_t i = 0; i < n.inputs.size(); ++i) {
            g.grads[static_cast<size_t>(n.inputs[i])].values[0] += go.values[i];
        }
    });
}

Value reshape(Value x, std::vector<int> shape) {
    Graph& g = *x.graph;
    Tensor out(std::move(shape), x.val().values);
    return make(g, std::move(out), {x.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (size_t i = 0; i < gx.values.size(); ++i) gx.values[i] += go.values[i];
    });
}

// ---- reductions --------------------------------------------------------

Value sum_all(Value x) {
    Graph& g = *x.graph;
    double s = 0.0;
    for (double v : x.val().values) s += v;
    return make(g, Tensor::scalar(s), {x.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const double go = g.grads[static_cast<size_t>(self)].values[0];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (double& v : gx.values) v += go;
    });
}

Value sq_euclidean(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    check_same_shape("sq_euclidean", a.val(), b.val());
    double s = 0.0;
    for (size_t i = 0; i < a.val().values.size(); ++i) {
        const double d = a.val().values[i] - b.val().values[i];
        s += d * d;
    }
    return make(g, Tensor::scalar(s), {a.id, b.id}, [](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const double go = g.grads[static_cast<size_t>(self)].values[0];
        const Tensor& av = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        const Tensor& bv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
        Tensor& ga = g.grads[static_cast<size_t>(n.inputs[0])];
        Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
        for (size_t i = 0; i < ga.values.size(); ++i) {
            const double d = 2.0 * (av.values[i] - bv.values[i]) * go;
            ga.values[i] += d;
            gb.values[i] -= d;
        }
    });
}

Value l2_norm_rows(Value x) {
    Graph& g = *x.graph;
    require_2d("l2_norm_rows", x.val());
    const int r = x.val().shape[0], c = x.val().shape[1];
    Tensor out = Tensor::zeros({r});
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += x.val().at(i, j) * x.val().at(i, j);
        out.values[static_cast<size_t>(i)] = std::sqrt(s);
    }
    // Subgradient 0 on an all-zero row.
    return make(g, std::move(out), {x.id}, [r, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& norms = n.value;
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        const Tensor& xv = g.nodes[static_cast<size_t>(n.inputs[0])].value;
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (int i = 0; i < r; ++i) {
            const double norm = norms.values[static_cast<size_t>(i)];
            if (norm == 0.0) continue;
            const double go_i = go.values[static_cast<size_t>(i)] / norm;
            for (int j = 0; j < c; ++j) gx.at(i, j) += go_i * xv.at(i, j);
        }
    });
}

Value max_pool_rows(Value x) {
    Graph& g = *x.graph;
    require_2d("max_pool_rows", x.val());
    const int r = x.val().shape[0], c = x.val().shape[1];
    Tensor out = Tensor::zeros({c});
    std::vector<int> arg(static_cast<size_t>(c), 0);
    for (int j = 0; j < c; ++j) {
        double best = x.val().at(0, j);
        int best_i = 0;
        for (int i = 1; i < r; ++i) {
            if (x.val().at(i, j) > best) {
                best = x.val().at(i, j);
                best_i = i;
            }
        }
        out.values[static_cast<size_t>(j)] = best;
        arg[static_cast<size_t>(j)] = best_i;
    }
    return make(g, std::move(out), {x.id}, [arg, c](Graph& g, int self) {
        const auto& n = g.nodes[static_cast<size_t>(self)];
        const Tensor& go = g.grads[static_cast<size_t>(self)];
        Tensor& gx = g.grads[static_cast<size_t>(n.inputs[0])];
        for (int j = 0; j < c; ++j) {
            gx.at(arg[static_cast<size_t>(j)], j) += go.values[static_cast<size_t>(j)];
        }
    });
}

Value cosine(Value a, Value b) {
    Graph& g = *common_graph(a, b);
    check_same_shape("cosine", a.val(), b.val());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.val().values.size(); ++i) {
        dot += a.val().values[i] * b.val().values[i];
        na += a.val().values[i] * a.val().values[i];
        nb += b.val().values[i] * b.val().values[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    const bool degenerate = (na == 0.0 || nb == 0.0);
    if (degenerate) ++g.degenerate_cosine_count;
    const double cos_v = degenerate ? 0.0 : dot / (na * nb);
    return make(g, Tensor::scalar(cos_v), {a.id, b.id},
                [dot, na, nb, cos_v, degenerate](Graph& g, int self) {
                    if (degenerate) return;
                    const auto& n = g.nodes[static_cast<size_t>(self)];
                    const double go = g.grads[static_cast<size_t>(self)].values[0];
                    const Tensor& av = g.nodes[static_cast<size_t>(n.inputs[0])].value;
                    const Tensor& bv = g.nodes[static_cast<size_t>(n.inputs[1])].value;
                    Tensor& ga = g.grads[static_cast<size_t>(n.inputs[0])];
                    Tensor& gb = g.grads[static_cast<size_t>(n.inputs[1])];
                    (void)dot;
                    const double inv = 1.0 / (na * nb);
                    for (size_t i = 0; i < ga.values.size(); ++i) {
                        ga.values[i] += go * (bv.values[i] * inv - cos_v * av.values[i] / (na * na));
                        gb.values[i] += go * (av.values[i] * inv - cos_v * bv.values[i] / (nb * nb));
                    }
                });
}

}  // namespace emoloc::ad
