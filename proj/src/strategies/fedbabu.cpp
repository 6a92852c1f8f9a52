#include "pfl/strategies/fedbabu.hpp"

#include "pfl/errors.hpp"
#include "pfl/runtime.hpp"

namespace pfl {

ModelParams fedbabu_finetune(const std::vector<LayerParams>& body, Activation activation,
                             const LayerParams& frozen_head, const Tensor& train_x,
                             std::span<const int> train_y, int epochs, int batch_size,
                             double lr, SplitRng rng) {
  if (train_y.empty()) throw CapacityError("fedbabu_finetune: empty train split");
  ModelParams out;
  out.body = body;
  out.head = frozen_head;
  out.activation = activation;
  if (epochs == 0) return out;

  // The body is frozen, so features are constant: compute them once and
  // train the head as a bodyless model over them.
  const Tensor features = body_features(body, activation, train_x);
  ModelParams head_model;
  head_model.head = frozen_head;
  head_model.activation = activation;
  local_sgd(head_model, features, train_y, epochs, batch_size, lr, rng);
  out.head = std::move(head_model.head);
  return out;
}

namespace {

class BabuStrategy final : public Strategy {
 public:
  BabuStrategy(const GlobalConfig& config, BabuConfig babu)
      : config_(config), babu_(babu) {}

  std::string name() const override { return "fedbabu"; }

  void setup(std::vector<ClientState>& clients, const ModelParams& init) override {
    body_ = init.body;
    frozen_head_ = init.head;
    activation_ = init.activation;
    for (ClientState& client : clients) {
      client.state = BabuState{};
      client.personalized = init;
    }
  }

  RoundMessage local_update(ClientState& client, const RoundContext&,
                            SplitRng rng) const override {
    ModelParams model;
    model.body = body_;
    model.head = frozen_head_;
    model.activation = activation_;
    const double loss =
        local_sgd(model, client.data.train_x, client.data.train_y, config_.local_epochs,
                  config_.batch_size, config_.local_lr, rng, ParamScope::body_only);

    RoundMessage msg;
    msg.client_id = client.id;
    msg.sample_count = static_cast<double>(client.data.train_size());
    msg.train_loss = loss;
    msg.payload = BodyUpload{std::move(model.body)};
    return msg;
  }

  void aggregate(const std::vector<RoundMessage>& uploads, const RoundContext&,
                 std::vector<ClientState>&) override {
    std::vector<WeightedLayers> entries;
    entries.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      entries.push_back(
          {msg.client_id, &std::get<BodyUpload>(msg.payload).body, msg.sample_count});
    }
    body_ = weighted_average_layers(std::move(entries));
  }

  ModelParams personalized_model(const ClientState& client, SplitRng rng) const override {
    return fedbabu_finetune(body_, activation_, frozen_head_, client.data.train_x,
                            client.data.train_y, babu_.fine_tune_epochs,
                            config_.batch_size, config_.local_lr, std::move(rng));
  }

  std::vector<int> predict_global(const ClientState&, const Tensor& batch) const override {
    ModelParams model;
    model.body = body_;
    model.head = frozen_head_;
    model.activation = activation_;
    return predict(model, batch);
  }

 private:
  GlobalConfig config_;
  BabuConfig babu_;
  std::vector<LayerParams> body_;
  LayerParams frozen_head_;
  Activation activation_ = Activation::relu;
};

}  // namespace

std::unique_ptr<Strategy> make_fedbabu_strategy(const GlobalConfig& config,
                                                const ModelParams&) {
  return std::make_unique<BabuStrategy>(config, std::get<BabuConfig>(config.strategy));
}

}  // namespace pfl
