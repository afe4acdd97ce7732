#pragma once

#include <string>
#include <vector>

#include "dsn/layers.hpp"
#include "dsn/losses.hpp"

namespace dsn {

enum class Scenario { glyph16, blobs2d, pose_glyph };
enum class Variant { dsn, source_only, target_only, dann_only, mmd_only, correg_only };
enum class Similarity { none, dann, mmd, correg };

std::string to_string(Scenario s);
std::string to_string(Variant v);
std::string to_string(Similarity s);
Scenario scenario_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);
Similarity similarity_from_string(const std::string& s);

// Shared encoder, per-domain private encoders (one topology, separate
// parameters), shared decoder, task head(s), and a domain classifier behind a
// gradient reversal. Baseline variants drop the parts they do not train.
struct DsnModel {
  Scenario scenario = Scenario::glyph16;
  Variant variant = Variant::dsn;
  Similarity similarity = Similarity::none;

  Shape input_shape;  // per-sample
  int num_classes = 0;
  int code_width = 0;

  StackSpec shared_encoder;   // theta_c
  StackSpec private_encoder;  // topology for both theta_p_s and theta_p_t
  StackSpec decoder;          // theta_d
  StackSpec class_head;       // theta_g
  StackSpec pose_head;        // theta_g (pose scenario only)
  StackSpec domain_classifier;  // theta_z, first layer is the gradient reversal

  ParameterSet params;

  bool has_private() const { return variant == Variant::dsn; }
  bool has_decoder() const { return variant == Variant::dsn; }
  bool has_domain_classifier() const {
    return (variant == Variant::dsn && similarity == Similarity::dann) || variant == Variant::dann_only;
  }
  bool has_pose() const { return scenario == Scenario::pose_glyph; }
};

// Effective similarity loss for a variant (baselines imply their own).
Similarity effective_similarity(Variant v, Similarity requested);

DsnModel build_desk_topology(Scenario scenario, Variant variant, Similarity similarity, uint64_t seed);

// Graph-bound views of the parameter groups, in ParameterSet group order.
struct BoundParams {
  std::vector<Var> c, p_s, p_t, d, g, z;
  std::vector<std::pair<Param*, Var>> flat;
};
BoundParams bind_params(Graph& g, ParameterSet& params);
// Rebind from pre-made leaves (finite-difference probes); order must match
// ParameterSet::all().
BoundParams bind_from_vars(DsnModel& model, const std::vector<Var>& vars);

struct ForwardOutputs {
  Var hc_s, hc_t;          // shared codes
  Var hp_s, hp_t;          // private codes (dsn only)
  Var xhat_s, xhat_t;      // reconstructions (dsn only)
  Var yhat_s;              // class softmax of the labeled domain
  Var qhat_s;              // pose quaternions (pose scenario)
  Var dhat;                // domain predictions for both domains, [Ns+Nt,1]
};

// Labeled images drive the task head; the unlabeled target side is skipped
// entirely for variants that never look at it. `g_pose` outputs are produced
// only when the model carries a pose head.
ForwardOutputs forward(Graph& g, const DsnModel& model, const BoundParams& bp, const Tensor& labeled_images,
                       const Tensor* target_images);

enum class DecodeMode { shared_only, private_only, combined };
enum class DomainSide { source, target };

// D(E_c(x)), D(E_p(x)) or D(E_c(x) + E_p(x)) for a batch of images.
Tensor decode_partial(DsnModel& model, const Tensor& images, DomainSide domain, DecodeMode mode);

// Class predictions (argmax indices) and optional normalized pose rows.
struct Predictions {
  std::vector<int> classes;
  Tensor quats;  // [N,4] when the model has a pose head
};
Predictions predict(DsnModel& model, const Tensor& images);

}  // namespace dsn
