#include "pfl/strategies/fedproto.hpp"

#include <map>

#include "pfl/errors.hpp"

namespace pfl {

namespace {

class ProtoStrategy final : public Strategy {
 public:
  ProtoStrategy(const GlobalConfig& config, ProtoConfig proto)
      : config_(config), proto_(proto) {}

  std::string name() const override { return "fedproto"; }

  void setup(std::vector<ClientState>& clients, const ModelParams& init) override {
    global_.clear();
    for (ClientState& client : clients) {
      client.state = ProtoState{};
      client.personalized = init;  // models never leave the client
    }
  }

  RoundMessage local_update(ClientState& client, const RoundContext&,
                            SplitRng rng) const override {
    ProtoState& st = std::get<ProtoState>(client.state);
    ModelParams& model = client.personalized;

    // L = L_S + lambda * L_R with L_R the mean squared distance between the
    // batch class prototypes and the matching global prototypes. The first
    // round has no global prototypes, so the regularizer is off.
    FeatureHook hook;
    if (!global_.empty() && proto_.lambda > 0.0) {
      const PrototypeMap* global = &global_;
      const double lambda = proto_.lambda;
      hook = [global, lambda](const Tensor& features, std::span<const int> labels,
                              Tensor& dfeatures) {
        const std::size_t dim = features.cols();
        std::map<int, std::pair<std::vector<double>, int>> batch_protos;
        for (std::size_t i = 0; i < features.rows(); ++i) {
          if (global->find(labels[i]) == global->end()) continue;
          auto& [sum, cnt] = batch_protos[labels[i]];
          if (sum.empty()) sum.assign(dim, 0.0);
          const double* f = features.data.data() + i * dim;
          for (std::size_t d = 0; d < dim; ++d) sum[d] += f[d];
          ++cnt;
        }
        if (batch_protos.empty()) return 0.0;
        const double inv_classes = 1.0 / static_cast<double>(batch_protos.size());
        double loss = 0.0;
        for (auto& [label, acc] : batch_protos) {
          auto& [sum, cnt] = acc;
          for (double& v : sum) v /= static_cast<double>(cnt);
          loss += lambda * inv_classes * squared_distance(sum, global->at(label).value);
        }
        for (std::size_t i = 0; i < features.rows(); ++i) {
          const auto it = batch_protos.find(labels[i]);
          if (it == batch_protos.end()) continue;
          const std::vector<double>& mean = it->second.first;
          const std::vector<double>& target = global->at(labels[i]).value;
          const double scale =
              2.0 * lambda * inv_classes / static_cast<double>(it->second.second);
          double* df = dfeatures.data.data() + i * dim;
          for (std::size_t d = 0; d < dim; ++d) df[d] += scale * (mean[d] - target[d]);
        }
        return loss;
      };
    }

    const double loss =
        local_sgd(model, client.data.train_x, client.data.train_y, config_.local_epochs,
                  config_.batch_size, config_.local_lr, rng, ParamScope::all, hook);

    st.local_prototypes =
        extract_prototypes(model, client.data.train_x, client.data.train_y);

    // Prototype-only upload: no model parameters leave the client.
    RoundMessage msg;
    msg.client_id = client.id;
    msg.sample_count = static_cast<double>(client.data.train_size());
    msg.train_loss = loss;
    msg.payload = PrototypeUpload{st.local_prototypes};
    return msg;
  }

  void aggregate(const std::vector<RoundMessage>& uploads, const RoundContext&,
                 std::vector<ClientState>&) override {
    std::vector<const PrototypeMap*> proto_uploads;
    proto_uploads.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      proto_uploads.push_back(&std::get<PrototypeUpload>(msg.payload).prototypes);
    }
    merge_prototypes(global_, aggregate_prototypes(proto_uploads));
  }

  ModelParams personalized_model(const ClientState& client, SplitRng) const override {
    return client.personalized;
  }

  // Nearest global prototype in feature space, embedded with the owner's
  // local body.
  std::vector<int> predict_global(const ClientState& owner,
                                  const Tensor& batch) const override {
    const Tensor features = body_features(owner.personalized.body,
                                          owner.personalized.activation, batch);
    return predict_nearest_prototype_l2(features, global_);
  }

  const PrototypeMap& global_prototypes() const { return global_; }

 private:
  GlobalConfig config_;
  ProtoConfig proto_;
  PrototypeMap global_;
};

}  // namespace

std::unique_ptr<Strategy> make_fedproto_strategy(const GlobalConfig& config,
                                                 const ModelParams&) {
  return std::make_unique<ProtoStrategy>(config, std::get<ProtoConfig>(config.strategy));
}

}  // namespace pfl
