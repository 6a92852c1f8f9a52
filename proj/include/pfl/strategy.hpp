#pragma once

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "pfl/config.hpp"
#include "pfl/model.hpp"
#include "pfl/partition.hpp"
#include "pfl/rng.hpp"

namespace pfl {

// ---------------------------------------------------------------------------
// Round messages: everything a client may upload. Prototype strategies upload
// PrototypeUpload only; a structural test relies on no parameter tensors
// appearing in those payloads.
// ---------------------------------------------------------------------------

struct ClassVector {
  std::vector<double> value;
  long long count = 0;
};

// Ordered by class id so aggregation folds deterministically.
using PrototypeMap = std::map<int, ClassVector>;

struct ModelUpload {
  ModelParams model;
};

struct BodyUpload {
  std::vector<LayerParams> body;
};

struct PrototypeUpload {
  PrototypeMap prototypes;
};

struct GcUpload {
  std::vector<LayerParams> body;
  LayerParams head;
};

struct ClassStat {
  std::vector<double> mean;
  std::vector<double> variance;  // per-dimension
  long long count = 0;
};

using FeatureStats = std::map<int, ClassStat>;

struct PacUpload {
  std::vector<LayerParams> extractor;
  LayerParams classifier;
  PrototypeMap centroids;  // post-training local feature centroids
  FeatureStats stats;      // pre-training feature statistics
};

using RoundPayload =
    std::variant<ModelUpload, BodyUpload, PrototypeUpload, GcUpload, PacUpload>;

struct RoundMessage {
  int client_id = 0;
  double sample_count = 0.0;
  double train_loss = 0.0;
  long long skipped_samples = 0;  // samples without a usable prototype this round
  RoundPayload payload;
};

// ---------------------------------------------------------------------------
// Per-client strategy state.
// ---------------------------------------------------------------------------

struct AppleState {
  std::vector<double> dr_vector;    // p_i over all clients
  std::vector<double> prox_center;  // p_0
};

struct AlaState {
  std::vector<Tensor> blend;  // one weight tensor per parameter tensor in range
  bool first_round_done = false;
};

struct BabuState {};  // the frozen head and aggregated body live on the server

struct GcState {
  LayerParams head;  // W_k row block plus bias, corrected by the server
};

struct PacState {
  LayerParams classifier;  // phi_i, replaced by the server's alpha-mixture
};

struct PclState {
  LayerParams projection;  // trainable head over the frozen backbone
  PrototypeMap local_prototypes;
};

struct ProtoState {
  PrototypeMap local_prototypes;
};

using StrategyState = std::variant<AppleState, AlaState, BabuState, GcState,
                                   PacState, PclState, ProtoState>;

struct ClientState {
  int id = 0;
  ClientDataset data;
  ModelParams personalized;
  StrategyState state;
};

struct RoundContext {
  int round = 1;  // 1-based
  const GlobalConfig* config = nullptr;
};

// ---------------------------------------------------------------------------
// Strategy contract driven by the round loop: snapshot -> parallel local
// updates -> barrier -> aggregation. local_update must not touch server
// state; aggregate is the single writer.
// ---------------------------------------------------------------------------

class Strategy {
 public:
  virtual ~Strategy() = default;

  virtual std::string name() const = 0;

  // One-time initialization of server state and every client's state.
  virtual void setup(std::vector<ClientState>& clients, const ModelParams& init) = 0;

  // Local update for one selected client against the round-start server
  // snapshot. Safe to run concurrently for distinct clients.
  virtual RoundMessage local_update(ClientState& client, const RoundContext& ctx,
                                    SplitRng rng) const = 0;

  // Folds uploads (pre-sorted ascending by client id) into server state and
  // pushes any per-client results back into `clients`.
  virtual void aggregate(const std::vector<RoundMessage>& uploads,
                         const RoundContext& ctx,
                         std::vector<ClientState>& clients) = 0;

  // The client's personalized model. Never mutates client or server state.
  virtual ModelParams personalized_model(const ClientState& client,
                                         SplitRng rng) const = 0;

  // Personalized predictions for the client's own samples. Defaults to argmax
  // of personalized_model; prototype strategies classify by prototype
  // distance instead.
  virtual std::vector<int> predict_personalized(const ClientState& client,
                                                const Tensor& batch,
                                                SplitRng rng) const;

  // Global-knowledge predictions for samples owned by `owner`. Model-based
  // strategies ignore `owner`; prototype strategies embed with the owner's
  // extractor and classify against global prototypes.
  virtual std::vector<int> predict_global(const ClientState& owner,
                                          const Tensor& batch) const = 0;
};

std::unique_ptr<Strategy> make_strategy(const GlobalConfig& config,
                                        const ModelParams& init);

// Count-weighted mean of prototype uploads (ascending client id), anchored on
// the first contributor so agreeing inputs aggregate exactly. Classes missing
// from every upload are absent from the result.
PrototypeMap aggregate_prototypes(const std::vector<const PrototypeMap*>& uploads);

// Replaces the classes present in `update`; classes held by no contributor
// this round carry over unchanged.
void merge_prototypes(PrototypeMap& global, PrototypeMap update);

// Per-class feature means of `x` under `params`, with counts.
PrototypeMap extract_prototypes(const ModelParams& params, const Tensor& x,
                                std::span<const int> labels);

// Nearest-prototype classification: smallest squared L2 distance / largest
// dot product. Ties go to the lowest class id. Throws on an empty map.
std::vector<int> predict_nearest_prototype_l2(const Tensor& features,
                                              const PrototypeMap& prototypes);
std::vector<int> predict_nearest_prototype_dot(const Tensor& features,
                                               const PrototypeMap& prototypes);

// Shared local-training loop: `epochs` passes of shuffled mini-batch SGD.
// Returns the mean per-batch loss. The hook adds a feature-space loss term.
double local_sgd(ModelParams& params, const Tensor& x, std::span<const int> y,
                 int epochs, int batch_size, double lr, SplitRng& rng,
                 ParamScope scope = ParamScope::all, const FeatureHook& hook = {});

// Shuffled mini-batch index plan for one epoch: ceil(n / batch_size) batches.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, int batch_size,
                                                 SplitRng& rng);

// Rows of x at `indices` as a contiguous batch with matching labels.
std::pair<Tensor, std::vector<int>> gather_batch(const Tensor& x,
                                                 std::span<const int> y,
                                                 std::span<const std::size_t> indices);

}  // namespace pfl
