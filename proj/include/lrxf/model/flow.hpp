#pragma once

#include "lrxf/rng.hpp"
#include "lrxf/tape.hpp"

namespace lrxf::model {

// One training-path sample: z_t = (1-t) z_r + t z_p + sigma * eps on the
// tape, with the condition-independent displacement target z_p - z_r.
template <class S>
struct PathSample {
  double t = 0.0;
  typename ad::Tape<S>::Id z_t;
  typename ad::Tape<S>::Id target;
  double sigma = 0.0;
};

template <class S>
PathSample<S> sample_path(ad::Tape<S>& tape, typename ad::Tape<S>::Id z_r,
                          typename ad::Tape<S>::Id z_p, double sigma,
                          rng::Stream& rs) {
  // copy the shape: tape growth invalidates references into it
  const std::vector<int> shape = tape.val(z_r).shape();
  if (!tape.val(z_r).same_shape(tape.val(z_p)))
    throw ad::ShapeError("sample_path endpoint shape mismatch");
  const double t = rs.next_unit();
  typename ad::Tape<S>::Id z_t =
      tape.add(tape.scale(z_r, static_cast<S>(1.0 - t)),
               tape.scale(z_p, static_cast<S>(t)));
  if (sigma != 0.0) {
    ad::Tensor<S> noise(shape);
    for (long long i = 0; i < noise.size(); ++i)
      noise.data()[i] = static_cast<S>(sigma * rs.next_normal());
    z_t = tape.add(z_t, tape.constant(std::move(noise)));
  }
  PathSample<S> s;
  s.t = t;
  s.z_t = z_t;
  s.target = tape.sub(z_p, z_r);
  s.sigma = sigma;
  return s;
}

// Per-sample regression of the field onto the displacement; entries are
// averaged so the value is comparable across molecule sizes.
template <class S, class FieldFn>
typename ad::Tape<S>::Id flow_loss_term(ad::Tape<S>& tape,
                                        const PathSample<S>& s,
                                        FieldFn&& field) {
  return tape.mse(field(s.z_t, s.t), s.target);
}

}  // namespace lrxf::model
