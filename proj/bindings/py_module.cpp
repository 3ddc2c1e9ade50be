// Python bindings for the core pipeline: simulator, rasterizer, dataset
// io, the multi-head VAE, hazard signal and DQN training/evaluation.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bevrl/dataset.hpp"
#include "bevrl/dqn.hpp"
#include "bevrl/experiment.hpp"
#include "bevrl/hazard.hpp"
#include "bevrl/scenario_io.hpp"
#include "bevrl/vae.hpp"

namespace py = pybind11;
using namespace bevrl;

namespace {

py::array_t<uint8_t> frame_to_array(const BevFrame& f) {
  py::array_t<uint8_t> arr({kBevChannels, f.height, f.width});
  std::copy(f.data.begin(), f.data.end(), arr.mutable_data());
  return arr;
}

py::array_t<uint8_t> mask_to_array(const Mask& m) {
  py::array_t<uint8_t> arr({m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
  return arr;
}

py::array_t<float> rgb_to_array(const RgbImage& img) {
  py::array_t<float> arr({3, img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), arr.mutable_data());
  return arr;
}

BevFrame frame_from_array(py::array_t<uint8_t, py::array::c_style> arr) {
  if (arr.ndim() != 3 || arr.shape(0) != kBevChannels)
    throw std::invalid_argument("expected [11,H,W] uint8 array");
  BevFrame f(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(2)));
  std::copy(arr.data(), arr.data() + arr.size(), f.data.begin());
  return f;
}

ScenarioKind kind_from_name(const std::string& s) {
  if (s == "roundabout") return ScenarioKind::kRoundabout;
  if (s == "five_way") return ScenarioKind::kFiveWay;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "BEV latent-state driving pipeline";

  // --- simulator ------------------------------------------------------------
  py::class_<StepEvents>(m, "StepEvents")
      .def_readonly("collision", &StepEvents::collision)
      .def_readonly("out_of_lane", &StepEvents::out_of_lane)
      .def_readonly("red_light_violation", &StepEvents::red_light_violation)
      .def_readonly("reached_goal", &StepEvents::reached_goal)
      .def_readonly("lateral_accel", &StepEvents::lateral_accel)
      .def_readonly("speed", &StepEvents::speed);

  py::class_<WorldState>(m, "World")
      .def_static(
          "spawn",
          [](const std::string& scenario, int n_agents, double aggressive,
             uint32_t seed) {
            return spawn_scenario(kind_from_name(scenario), n_agents, aggressive,
                                  seed);
          },
          py::arg("scenario"), py::arg("n_agents") = 0,
          py::arg("aggressive_fraction") = 0.0, py::arg("seed") = 1)
      .def("step",
           [](WorldState& w, int action) { return step(w, decode_action(action)); },
           py::arg("action"))
      .def("autopilot_step",
           [](WorldState& w) {
             auto [accel, steer] = autopilot(w.ego, w);
             return step(w, EgoAction{accel, steer});
           })
      .def_property_readonly("tick", [](const WorldState& w) { return w.tick; })
      .def_property_readonly("ego_speed", [](const WorldState& w) { return w.ego.v; })
      .def_property_readonly(
          "ego_pose", [](const WorldState& w) {
            return py::make_tuple(w.ego.x, w.ego.y, w.ego.yaw);
          })
      .def_property_readonly("n_agents",
                             [](const WorldState& w) { return w.others.size(); })
      .def("rasterize", [](const WorldState& w, int size) {
        RasterSpec spec;
        spec.height = size;
        spec.width = size;
        return frame_to_array(rasterize_input(w, spec));
      }, py::arg("size") = 64);

  m.def("num_actions", [] { return kNumActions; });
  m.def("decode_action", [](int idx) {
    EgoAction a = decode_action(idx);
    return py::make_tuple(a.accel_cmd, a.steer_cmd);
  });

  // --- dataset ---------------------------------------------------------------
  m.def(
      "collect",
      [](const std::string& scenario, int frames, int agents, double aggressive,
         uint32_t seed, int size, const std::string& out) {
        CollectConfig cfg;
        cfg.kind = kind_from_name(scenario);
        cfg.n_frames = frames;
        cfg.n_agents = agents;
        cfg.aggressive_fraction = aggressive;
        cfg.seed = seed;
        cfg.spec.height = size;
        cfg.spec.width = size;
        auto recs = collect(cfg);
        DatasetHeader h;
        h.height = static_cast<uint16_t>(size);
        h.width = static_cast<uint16_t>(size);
        DatasetFile::write(out, h, recs);
        return recs.size();
      },
      py::arg("scenario"), py::arg("frames"), py::arg("agents") = 0,
      py::arg("aggressive_fraction") = 0.2, py::arg("seed") = 1, py::arg("size") = 64,
      py::arg("out") = "dataset.bevd");

  py::class_<DatasetFile>(m, "Dataset")
      .def_static("open", &DatasetFile::open, py::arg("path"))
      .def_property_readonly("count", &DatasetFile::count)
      .def("record", [](const DatasetFile& f, uint32_t i) {
        Record r = f.read_record(i);
        py::dict d;
        d["frame_id"] = r.frame_id;
        d["scenario_id"] = r.scenario_id;
        d["ego_speed"] = r.ego_speed;
        d["bev"] = frame_to_array(r.bev);
        d["plan"] = mask_to_array(r.plan);
        d["pred"] = mask_to_array(r.pred);
        return d;
      }, py::arg("index"));

  m.def("make_split", &make_split, py::arg("count"), py::arg("fraction"),
        py::arg("seed"));

  // --- vae / hazard -----------------------------------------------------------
  py::class_<MultiHeadVae>(m, "Vae")
      .def(py::init([](int size, int latent, std::vector<int> channels, bool rgb,
                       bool plan, bool pred, uint32_t seed) {
             VaeConfig cfg;
             cfg.height = size;
             cfg.width = size;
             cfg.latent = latent;
             cfg.enc_channels = std::move(channels);
             cfg.head_rgb = rgb;
             cfg.head_plan = plan;
             cfg.head_pred = pred;
             return MultiHeadVae(cfg, seed);
           }),
           py::arg("size") = 64, py::arg("latent") = 20,
           py::arg("channels") = std::vector<int>{32, 64, 128, 256},
           py::arg("rgb") = true, py::arg("plan") = true, py::arg("pred") = true,
           py::arg("seed") = 1)
      .def_static("load", &MultiHeadVae::load, py::arg("path"))
      .def("save", &MultiHeadVae::save, py::arg("path"))
      .def_property_readonly("latent",
                             [](const MultiHeadVae& v) { return v.config().latent; })
      .def_property_readonly("size",
                             [](const MultiHeadVae& v) { return v.config().height; })
      .def("encode_mu",
           [](const MultiHeadVae& v, py::array_t<uint8_t, py::array::c_style> arr) {
             return v.encode_mu(frame_from_array(arr));
           },
           py::arg("frame"))
      .def("decode_pred", &MultiHeadVae::decode_pred, py::arg("z"))
      .def("param_count", &MultiHeadVae::param_count);

  m.def(
      "train_vae",
      [](MultiHeadVae& model, const std::string& data_path, double fraction,
         int epochs, int batch, float lr, uint32_t seed, const std::string& out) {
        DatasetFile f = DatasetFile::open(data_path);
        std::vector<Record> recs;
        for (uint32_t i = 0; i < f.count(); ++i) recs.push_back(f.read_record(i));
        TrainVaeOptions opt;
        opt.epochs = epochs;
        opt.batch_size = batch;
        opt.lr = lr;
        opt.seed = seed;
        opt.out_dir = out;
        auto split = make_split(f.count(), fraction, seed);
        auto log = train_vae(model, recs, split, opt);
        std::vector<double> totals;
        for (const auto& l : log) totals.push_back(l.total);
        return totals;
      },
      py::arg("model"), py::arg("data"), py::arg("fraction") = 1.0,
      py::arg("epochs") = 10, py::arg("batch") = 32, py::arg("lr") = 1e-3f,
      py::arg("seed") = 1, py::arg("out") = "");

  m.def(
      "hazard",
      [](py::array_t<uint8_t, py::array::c_style> route, std::vector<float> pred) {
        if (route.ndim() != 2) throw std::invalid_argument("route must be 2-d");
        Mask mask(static_cast<int>(route.shape(0)), static_cast<int>(route.shape(1)));
        std::copy(route.data(), route.data() + route.size(), mask.data.begin());
        HazardValue h = hazard(mask, pred);
        return py::make_tuple(h.raw, h.normalized);
      },
      py::arg("route"), py::arg("pred"));

  // --- dqn --------------------------------------------------------------------
  m.def(
      "train_dqn",
      [](const MultiHeadVae* encoder, const std::string& variant,
         const std::string& scenario, int agents, int episodes, int max_steps,
         int size, uint32_t seed, const std::string& out) {
        TrainDqnOptions opt;
        opt.env.kind = kind_from_name(scenario);
        opt.env.n_agents = agents;
        opt.env.spec.height = size;
        opt.env.spec.width = size;
        opt.dqn.episodes = episodes;
        opt.dqn.max_episode_steps = max_steps;
        opt.seed = seed;
        opt.out_dir = out;
        auto res = train_dqn(encoder, parse_variant(variant), opt);
        std::vector<double> returns;
        for (const auto& ep : res.episodes) returns.push_back(ep.ret);
        return returns;
      },
      py::arg("encoder").none(true), py::arg("variant"),
      py::arg("scenario") = "roundabout", py::arg("agents") = 0,
      py::arg("episodes") = 10, py::arg("max_steps") = 400, py::arg("size") = 64,
      py::arg("seed") = 1, py::arg("out") = "");

  m.def("git_blob_hash", &git_blob_hash, py::arg("content"));
  m.attr("__version__") = "0.1.0";
}
