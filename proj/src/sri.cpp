#include "g2k/sri.hpp"

#include <cmath>
#include <iostream>
#include <mutex>

#include "g2k/error.hpp"
#include "g2k/image.hpp"

namespace g2k::sri {
namespace {

constexpr double kScenePlaceholder = 0.5;

void warn_missing_scene_image() {
  static std::once_flag once;
  std::call_once(once, [] {
    std::cerr << "warning: no scene image for the conv variant; using a "
                 "constant placeholder image\n";
  });
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "g_lstm" || name == "glstm") return Variant::kGLstm;
  if (name == "mc") return Variant::kMC;
  if (name == "mcr_n") return Variant::kMCRn;
  if (name == "mcr_mp") return Variant::kMCRmp;
  if (name == "mcr_mpc") return Variant::kMCRmpc;
  fail(ErrorKind::kConfig, "unknown variant '" + name +
                               "' (expected g_lstm, mc, mcr_n, mcr_mp, mcr_mpc)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kGLstm: return "g_lstm";
    case Variant::kMC: return "mc";
    case Variant::kMCRn: return "mcr_n";
    case Variant::kMCRmp: return "mcr_mp";
    case Variant::kMCRmpc: return "mcr_mpc";
  }
  return "g_lstm";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::kGLstm, Variant::kMC,
                                         Variant::kMCRn, Variant::kMCRmp,
                                         Variant::kMCRmpc};
  return v;
}

ModelConfig ModelConfig::from(const config::RunConfig& run) {
  if (run.get("variant").empty()) {
    fail(ErrorKind::kConfig, "no variant selected");
  }
  ModelConfig c;
  c.variant = parse_variant(run.get("variant"));
  auto positive = [&](const std::string& key) {
    const int v = run.get_int(key);
    if (v < 1) fail(ErrorKind::kConfig, key + " must be >= 1");
    return v;
  };
  c.obs_len = static_cast<std::size_t>(positive("obs_len"));
  c.pred_len = static_cast<std::size_t>(positive("pred_len"));
  c.cell.hidden_size = positive("hidden");
  c.cell.num_blocks = positive("num_blocks");
  c.cell.block_skip = positive("block_skip");
  c.cell.cell_units = positive("cell_units");
  c.embed_x = positive("embed_x");
  c.embed_v = positive("embed_v");
  c.conv_channels = positive("conv_channels");
  c.grid_size = positive("grid_size");
  c.lambda = run.get_double("lambda");
  c.tau = run.get("tau") == "auto" ? -1.0 : run.get_double("tau");
  c.mp_tau = run.get("mp_tau") == "auto" ? -1.0 : run.get_double("mp_tau");
  c.self_loops = run.get_bool("self_loops");
  c.mask_trainable = run.get_bool("mask_trainable");
  c.attention = run.get_bool("attention");
  c.static_grid = run.get_bool("static_grid");
  const auto& decode = run.get("decode");
  if (decode != "offsets" && decode != "absolute") {
    fail(ErrorKind::kConfig, "decode must be 'offsets' or 'absolute'");
  }
  c.offset_decoding = decode == "offsets";
  c.phi_tanh = run.get_bool("phi_tanh");
  c.init_std = run.get_double("init_std");
  const int seed = run.get_int("seed");
  if (seed < 0) fail(ErrorKind::kConfig, "seed must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (obs_len < 2) fail(ErrorKind::kConfig, "obs_len must be >= 2");
  if (pred_len < 1) fail(ErrorKind::kConfig, "pred_len must be >= 1");
  if (!(lambda >= 0.0)) fail(ErrorKind::kConfig, "lambda must be >= 0");
  if (!(init_std >= 0.0)) fail(ErrorKind::kConfig, "init_std must be >= 0");
  cell.validate();
  const int d = cell.hidden_size;
  cell.validate_input(uses_vislets() ? embed_x + embed_v : embed_x);
  if (uses_static_grid()) {
    cell.validate_input(d + embed_v + (uses_conv() ? conv_channels : 0));
  }
}

Var embed_positions(const Var& positions, const Var& w_i, const Var& w_ii,
                    bool apply_tanh) {
  Var out = matmul(matmul(positions, w_i), w_ii);
  return apply_tanh ? tanh(out) : out;
}

Var embed_vislets(const Var& vislets, const Var& w_iv) {
  const auto& v = vislets.data();
  if (v.cols() != 2) fail(ErrorKind::kShape, "vislets must be n x 2");
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double norm = v.row(r).norm();
    if (norm != 0.0 && std::abs(norm - 1.0) > 1e-6) {
      fail(ErrorKind::kInput, "vislet row " + std::to_string(r) +
                                  " is neither a unit vector nor zero");
    }
  }
  return matmul(vislets, w_iv);
}

Var fuse_features(Variant variant, const Var& social_features,
                  const Var& vislet_embedding, const Var& relation_features,
                  const FusionWeights& w, const std::optional<Var>& context) {
  if (variant == Variant::kGLstm || variant == Variant::kMC) {
    fail(ErrorKind::kContract, "fuse_features needs a relational variant, got " +
                                   to_string(variant));
  }
  const Var gate =
      bias_add(matmul(ad::concat_cols({social_features, vislet_embedding}), w.w_v),
               w.b_v);
  Var fused = mul(gate, matmul(relation_features, w.w_r));
  if (context) fused = scale_cols(fused, transpose(matmul(*context, w.w_c)));
  return fused;
}

Var attention(const Var& fused) { return softmax_rows(fused); }

Var node_softmax(const Var& hidden) { return softmax_rows(hidden); }

Var message_pass(const Var& hidden, const Var& static_attended,
                 const Matrix& occupancy, double tau) {
  const Var importance = matmul(Var::constant(occupancy), static_attended);
  const Var weights = Var::constant(Matrix::Ones(hidden.rows(), hidden.cols()));
  const Var mixed = softmax_rows(mul(hidden, add(weights, importance)));
  return tau > 0.0 ? threshold(mixed, tau) : mixed;
}

Adjacency adjacency(const Var& hidden, const Var& w_a, bool self_loops,
                    double tau) {
  const Eigen::Index n = hidden.rows();
  if (n < 1) fail(ErrorKind::kContract, "adjacency needs at least one node");
  const Var logits = matmul(matmul(hidden, w_a), transpose(hidden));
  Adjacency out;
  if (self_loops || n == 1) {
    out.weights = softmax_rows(logits);
  } else {
    Matrix allowed = Matrix::Ones(n, n);
    allowed.diagonal().setZero();
    out.weights = masked_softmax_rows(logits, allowed);
  }
  const auto& a = out.weights.data();
  out.edges.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j && !self_loops) continue;
      if (a(i, j) >= tau) {
        out.edges[static_cast<std::size_t>(i)].emplace_back(i, j);
      }
    }
  }
  return out;
}

Var update_states(const Var& adjacency_weights, const Var& hidden) {
  return matmul(adjacency_weights, hidden);
}

BatchTensors BatchTensors::from(const data::SceneBatch& batch) {
  BatchTensors t;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const std::size_t obs = batch.obs_len();
  const std::size_t pred = batch.pred_len();
  for (std::size_t s = 0; s < obs; ++s) {
    Matrix disp = Matrix::Zero(n, 2);
    Matrix vis = Matrix::Zero(n, 2);
    std::vector<data::Vec2> pos;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& w = batch.windows[static_cast<std::size_t>(i)];
      if (s > 0) {
        disp(i, 0) = w.obs[s].x - w.obs[s - 1].x;
        disp(i, 1) = w.obs[s].y - w.obs[s - 1].y;
      }
      if (w.has_vislets()) {
        vis(i, 0) = w.vislets[s].x;
        vis(i, 1) = w.vislets[s].y;
      }
      pos.push_back({w.obs[s].x, w.obs[s].y});
    }
    t.displacement.push_back(std::move(disp));
    t.vislets.push_back(std::move(vis));
    t.positions.push_back(std::move(pos));
  }
  t.last_observed = Matrix::Zero(n, 2);
  t.target = Matrix::Zero(n, static_cast<Eigen::Index>(2 * pred));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& w = batch.windows[static_cast<std::size_t>(i)];
    t.last_observed(i, 0) = w.obs.back().x;
    t.last_observed(i, 1) = w.obs.back().y;
    for (std::size_t k = 0; k < pred; ++k) {
      t.target(i, static_cast<Eigen::Index>(2 * k)) = w.target[k].x;
      t.target(i, static_cast<Eigen::Index>(2 * k + 1)) = w.target[k].y;
    }
  }
  return t;
}

G2KModel::G2KModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const auto normal = ad::InitSpec::normal(0.0, cfg_.init_std);
  const auto zeros = ad::InitSpec::zeros();
  const int d = cfg_.cell.hidden_size;
  const int k = cfg_.cells();

  store_.add("sri.phi_x.W_i", 2, cfg_.embed_x, normal, rng);
  store_.add("sri.phi_x.W_ii", cfg_.embed_x, cfg_.embed_x, normal, rng);
  if (cfg_.uses_vislets()) {
    store_.add("sri.phi_v.W_i", 2, cfg_.embed_v, normal, rng);
  }
  const int social_in = cfg_.embed_x + (cfg_.uses_vislets() ? cfg_.embed_v : 0);
  social_ = gridlstm::GridLSTM(store_, "sri.nlstm", cfg_.cell, social_in, rng,
                               cfg_.init_std);

  if (cfg_.relational()) {
    if (cfg_.uses_static_grid()) {
      if (cfg_.uses_conv()) {
        store_.add("gnn.conv.K", 9, cfg_.conv_channels, normal, rng);
        store_.add("gnn.conv.b", 1, cfg_.conv_channels, zeros, rng);
        store_.add("gnn.mask", k, 1, ad::InitSpec::normal(1.0, 0.01), rng,
                   cfg_.mask_trainable);
      }
      const int static_in =
          d + cfg_.embed_v + (cfg_.uses_conv() ? cfg_.conv_channels : 0);
      static_ = gridlstm::GridLSTM(store_, "gnn.nlstm", cfg_.cell, static_in,
                                   rng, cfg_.init_std);
      store_.add("gnn.W_ho", d, d, normal, rng);
    }
    if (cfg_.attention) {
      store_.add("sri.fuse.W_v", d + cfg_.embed_v, k, normal, rng);
      store_.add("sri.fuse.b_v", 1, k, zeros, rng);
      store_.add("sri.fuse.W_r", cfg_.uses_static_grid() ? k : d, k, normal, rng);
      if (cfg_.uses_conv()) {
        store_.add("sri.fuse.W_c", cfg_.conv_channels + d, 1, normal, rng);
      }
    }
    store_.add("sri.adj.W_A", d, d, normal, rng);
  }
  const auto out_w = static_cast<Eigen::Index>(2 * cfg_.pred_len);
  store_.add("head.W", d, out_w, normal, rng);
  store_.add("head.b", 1, out_w, zeros, rng);
}

KernelOutput G2KModel::run(const data::SceneBatch& batch) const {
  if (batch.size() == 0) fail(ErrorKind::kInput, "empty scene batch");
  if (batch.obs_len() != cfg_.obs_len || batch.pred_len() != cfg_.pred_len) {
    fail(ErrorKind::kInput,
         "batch windows are " + std::to_string(batch.obs_len()) + "+" +
             std::to_string(batch.pred_len()) + " steps, model expects " +
             std::to_string(cfg_.obs_len) + "+" + std::to_string(cfg_.pred_len));
  }
  if (cfg_.uses_vislets() && !batch.has_vislets()) {
    fail(ErrorKind::kInput, "variant " + to_string(cfg_.variant) +
                                " needs head-pose vislets on every window");
  }

  const auto tensors = BatchTensors::from(batch);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const int d = cfg_.cell.hidden_size;
  const int k = cfg_.cells();
  const auto grid = gnn::SceneGrid::fit(batch, cfg_.grid_size);

  Matrix grid_image;
  gnn::ConvParams conv;
  if (cfg_.uses_conv()) {
    if (batch.scene_image) {
      grid_image = image::downsample(*batch.scene_image, cfg_.grid_size);
    } else {
      warn_missing_scene_image();
      grid_image = Matrix::Constant(cfg_.grid_size, cfg_.grid_size, kScenePlaceholder);
    }
    conv = {param("gnn.conv.K"), param("gnn.conv.b")};
  }
  FusionWeights fusion;
  if (cfg_.relational() && cfg_.attention) {
    fusion.w_v = param("sri.fuse.W_v");
    fusion.b_v = param("sri.fuse.b_v");
    fusion.w_r = param("sri.fuse.W_r");
    if (cfg_.uses_conv()) fusion.w_c = param("sri.fuse.W_c");
  }
  const double adj_tau = cfg_.tau >= 0.0 ? cfg_.tau : 1.0 / static_cast<double>(n);
  const double mp_tau = cfg_.mp_tau >= 0.0 ? cfg_.mp_tau : 1.0 / d;

  auto social_state = gridlstm::init_state(cfg_.cell, n);
  auto static_state = gridlstm::init_state(cfg_.cell, k);
  Var social_mean = Var::constant(Matrix::Zero(1, d));
  Var features;
  KernelOutput out;

  for (std::size_t t = 0; t < cfg_.obs_len; ++t) {
    const Var x_emb = embed_positions(Var::constant(tensors.displacement[t]),
                                      param("sri.phi_x.W_i"),
                                      param("sri.phi_x.W_ii"), cfg_.phi_tanh);
    Var v_emb;
    Var joint = x_emb;
    if (cfg_.uses_vislets()) {
      v_emb = embed_vislets(Var::constant(tensors.vislets[t]), param("sri.phi_v.W_i"));
      joint = ad::concat_cols({x_emb, v_emb});
    }
    auto [f_s, stepped] = social_.step(joint, social_state);

    StepDiagnostics diag;
    diag.adjacency = Matrix::Identity(n, n);
    diag.edges.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) diag.edges[i].emplace_back(i, i);
    diag.ped_attention = Matrix::Constant(n, k, 1.0 / k);
    diag.cell_attention = Matrix::Constant(1, k, 1.0 / k);
    diag.static_features = Matrix::Zero(k, d);

    if (!cfg_.relational()) {
      social_state = stepped;
    } else {
      const Matrix occ = gnn::occupancy(tensors.positions[t], grid);
      Var hidden = stepped.h;
      Var relation = f_s;
      Var context;
      Var static_reg;
      if (cfg_.uses_static_grid()) {
        context = cfg_.uses_conv()
                      ? gnn::conv_encode(grid_image, social_mean, param("gnn.mask"), conv)
                      : broadcast_rows(social_mean, k);
        const Var pooled = gnn::pool_vislets(gnn::pooling_matrix(occ), v_emb);
        auto [f_o, next_static] =
            gnn::encode_visuospatial(static_, context, pooled, static_state);
        static_state = next_static;
        static_reg = gnn::regularize(f_o, cfg_.lambda);
        relation = gnn::fuse_mask(f_s, static_reg);
      }

      Var ped_attention;
      if (cfg_.attention) {
        std::optional<Var> gate;
        if (cfg_.uses_conv()) gate = context;
        ped_attention = attention(
            fuse_features(cfg_.variant, f_s, v_emb, relation, fusion, gate));
      } else {
        ped_attention = Var::constant(Matrix::Constant(n, k, 1.0 / k));
      }

      if (cfg_.uses_static_grid()) {
        const Var cell_attention = mean_rows(ped_attention);
        const Var hidden_proj = matmul(static_state.h, param("gnn.W_ho"));
        const Var attended = gnn::attend_cells(static_reg, hidden_proj, cell_attention);
        hidden = message_pass(hidden, attended, occ, mp_tau);
        diag.cell_attention = cell_attention.data();
        diag.static_features = attended.data();
      } else {
        // Attention mass a pedestrian puts on occupied cells, scaled so
        // uniform attention gives weight 1.
        const Matrix occ_share = occ.colwise().mean().transpose();
        const Var weight =
            scale(matmul(ped_attention, Var::constant(occ_share)), static_cast<double>(k));
        hidden = node_softmax(scale_rows(hidden, weight));
        diag.cell_attention = ped_attention.data().colwise().mean();
      }

      auto adj = adjacency(hidden, param("sri.adj.W_A"), cfg_.self_loops, adj_tau);
      social_state = gridlstm::GridState{update_states(adj.weights, hidden), stepped.c};
      diag.adjacency = adj.weights.data();
      diag.edges = std::move(adj.edges);
      diag.ped_attention = ped_attention.data();
    }
    out.diagnostics.push_back(std::move(diag));
    social_mean = mean_rows(f_s);
    features = f_s;
  }

  out.offsets = bias_add(matmul(features, param("head.W")), param("head.b"));
  const Var origin = Var::constant(tensors.last_observed);
  if (cfg_.offset_decoding) {
    out.predictions = cumulative_offsets(out.offsets, origin);
  } else {
    const auto steps = static_cast<Eigen::Index>(cfg_.pred_len);
    out.predictions = add(out.offsets, Var::constant(tensors.last_observed.replicate(1, steps)));
  }
  return out;
}

}  // namespace g2k::sri
