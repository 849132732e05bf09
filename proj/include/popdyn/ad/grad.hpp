#pragma once

#include <span>
#include <vector>

#include "popdyn/ad/dual.hpp"
#include "popdyn/ad/param_vector.hpp"
#include "popdyn/ad/tape.hpp"
#include "popdyn/util/errors.hpp"

namespace popdyn::ad {

// A loss builder is a functor callable as
//   NodeId operator()(Tape<S>& tape, const std::vector<NodeId>& params)
// for both S = double and S = Dual, where `params` holds one input node per
// layout slice of the parameter vector, in slice order.

template <typename S>
std::vector<typename Tape<S>::NodeId> make_param_nodes(Tape<S>& tape, const ParamVector& theta,
                                                       const std::vector<double>* tangent) {
    std::vector<typename Tape<S>::NodeId> ids;
    const auto& layout = *theta.layout();
    ids.reserve(layout.count());
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const auto& s = layout.slice(i);
        std::span<const double> vals(theta.values().data() + s.offset, s.size());
        std::span<const double> tans;
        if (tangent) tans = std::span<const double>(tangent->data() + s.offset, s.size());
        ids.push_back(tape.input(vals, s.rows, s.cols, tans));
    }
    return ids;
}

template <typename S>
std::vector<double> collect_adjoints(const Tape<S>& tape,
                                     const std::vector<typename Tape<S>::NodeId>& ids,
                                     const ParamVector& theta, bool tangent_component) {
    std::vector<double> out(theta.size());
    const auto& layout = *theta.layout();
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const auto& s = layout.slice(i);
        const auto adj = tape.adjoint(ids[i]);
        for (std::size_t j = 0; j < s.size(); ++j)
            out[s.offset + j] = tangent_component ? tangent_part(adj[j]) : value_part(adj[j]);
    }
    return out;
}

template <typename F>
double eval_loss(F&& loss_fn, const ParamVector& theta) {
    Tape<double> tape;
    auto ids = make_param_nodes(tape, theta, nullptr);
    const auto loss = loss_fn(tape, ids);
    return tape.value(loss)[0];
}

template <typename F>
std::vector<double> grad(F&& loss_fn, const ParamVector& theta, double* loss_out = nullptr) {
    Tape<double> tape;
    auto ids = make_param_nodes(tape, theta, nullptr);
    const auto loss = loss_fn(tape, ids);
    if (loss_out) *loss_out = tape.value(loss)[0];
    tape.backward(loss);
    return collect_adjoints(tape, ids, theta, false);
}

// H(theta) * v by differentiating the reverse sweep forward along v.
template <typename F>
std::vector<double> hessian_vector_product(F&& loss_fn, const ParamVector& theta,
                                           const std::vector<double>& v) {
    if (v.size() != theta.size()) throw DataError("hessian_vector_product: size mismatch");
    Tape<Dual> tape;
    auto ids = make_param_nodes(tape, theta, &v);
    const auto loss = loss_fn(tape, ids);
    tape.backward(loss);
    return collect_adjoints(tape, ids, theta, true);
}

// Meta-gradient of loss_outer(theta_k) where theta_{j+1} = theta_j -
// alpha * grad(loss_inner)(theta_j), taken with respect to theta_0. The
// chain d theta_k / d theta_0 is a product of (I - alpha H(theta_j))
// factors, applied here as Hessian-vector products in reverse; with
// first_order set, those factors are dropped and the plain outer gradient
// at theta_k is returned.
template <typename FOuter, typename FInner>
std::vector<double> grad_through_update(FOuter&& loss_outer, FInner&& loss_inner,
                                        const ParamVector& theta, double alpha, int k_inner,
                                        bool first_order = false) {
    if (k_inner < 1) throw DataError("grad_through_update: k_inner must be >= 1");
    if (!(alpha > 0.0)) throw DataError("grad_through_update: alpha must be > 0");

    std::vector<ParamVector> trajectory;
    trajectory.reserve(static_cast<std::size_t>(k_inner) + 1);
    trajectory.push_back(theta);
    for (int j = 0; j < k_inner; ++j) {
        const auto g = grad(loss_inner, trajectory.back());
        ParamVector next = trajectory.back();
        next.axpy(-alpha, g);
        trajectory.push_back(std::move(next));
    }

    std::vector<double> v = grad(loss_outer, trajectory.back());
    if (!first_order) {
        for (int j = k_inner - 1; j >= 0; --j) {
            const auto hv = hessian_vector_product(loss_inner, trajectory[static_cast<std::size_t>(j)], v);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= alpha * hv[i];
        }
    }
    return v;
}

}  // namespace popdyn::ad
