// Python bindings: fusion algebra, metrics, feature files, and the synth/train/infer/eval pipeline.

#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "guef/config.hpp"
#include "guef/error.hpp"
#include "guef/evidence.hpp"
#include "guef/gradcheck.hpp"
#include "guef/io.hpp"
#include "guef/localization.hpp"
#include "guef/objectives.hpp"
#include "guef/synth.hpp"
#include "guef/training.hpp"

namespace py = pybind11;
using namespace guef;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array (D x W)");
  const auto d = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
  return Tensor({d, w}, std::vector<double>(a.data(), a.data() + d * w));
}

RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  RunConfig c = RunConfig::parse(in);
  c.validate();
  return c;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["map"] = std::vector<double>(r.map.begin(), r.map.end());
  d["avg_0.1_0.5"] = r.avg_01_05;
  d["avg_0.3_0.7"] = r.avg_03_07;
  d["avg_0.1_0.7"] = r.avg_01_07;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Evidential fusion and hybrid attention for weakly supervised temporal action localization";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<TotalConflictError>(m, "TotalConflictError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  py::class_<BeliefMass>(m, "BeliefMass")
      .def(py::init([](std::vector<double> s, double theta) { return BeliefMass{std::move(s), theta}; }),
           py::arg("singletons"), py::arg("theta"))
      .def_readwrite("singletons", &BeliefMass::singletons)
      .def_readwrite("theta", &BeliefMass::theta)
      .def("total", &BeliefMass::total)
      .def("__repr__", [](const BeliefMass& b) {
        std::ostringstream os;
        os << "BeliefMass(singletons=[";
        for (std::size_t k = 0; k < b.singletons.size(); ++k) os << (k ? ", " : "") << b.singletons[k];
        os << "], theta=" << b.theta << ")";
        return os.str();
      });

  m.def(
      "masses_from_evidence", [](std::vector<double> e) { return masses_from_evidence(Evidence(std::move(e))); },
      py::arg("evidence"), "Belief masses e_k/S and uncertainty T/S with S = sum(e + 1).");
  m.def("vacuous", &vacuous, py::arg("classes"));
  m.def("conflict", &conflict, py::arg("m1"), py::arg("m2"));
  m.def("combine", &combine, py::arg("m1"), py::arg("m2"), "Dempster combination on singletons plus the full frame.");
  m.def("combine_many", [](const std::vector<BeliefMass>& ms) { return combine_many(ms); }, py::arg("masses"));

  m.def("tiou", [](std::size_t s1, std::size_t e1, std::size_t s2, std::size_t e2) { return tiou({s1, e1}, {s2, e2}); },
        py::arg("start1"), py::arg("end1"), py::arg("start2"), py::arg("end2"));
  m.def("schedule_weight", &schedule_weight, py::arg("epoch"), py::arg("total_epochs"), py::arg("rank"),
        py::arg("width"), py::arg("delta") = 0.7);

  m.def(
      "read_features", [](const std::filesystem::path& p) { return to_numpy(read_features(p)); }, py::arg("path"));
  m.def(
      "write_features",
      [](const std::filesystem::path& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
        write_features(p, from_numpy(a));
      },
      py::arg("path"), py::arg("features"));

  m.def(
      "synthesize",
      [](const std::string& config, const std::filesystem::path& out) {
        const RunConfig c = parse_config(config);
        return write_dataset(synthesize(c, c.require_seed()), out).videos.size();
      },
      py::arg("config"), py::arg("out_dir"), "Writes a synthetic dataset; returns the number of videos.");

  m.def(
      "train",
      [](const std::string& config, const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
         const std::string& split) {
        const RunConfig c = parse_config(config);
        const auto samples = load_samples(Manifest::read(manifest), split, c.dims);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(c, samples, {nullptr, checkpoint});
        }
        return r.log;
      },
      py::arg("config"), py::arg("manifest"), py::arg("checkpoint"), py::arg("split") = "train",
      "Trains, writes the checkpoint, and returns the per-iteration loss lines.");

  m.def(
      "infer",
      [](const std::string& config, const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
         const std::string& split) {
        const RunConfig c = parse_config(config);
        const ModelParams params = read_checkpoint(checkpoint);
        const auto samples = load_samples(Manifest::read(manifest), split, params.dims());
        const InferenceResult r = infer(params, c, samples);
        py::list proposals;
        for (const auto& p : r.proposals) {
          proposals.append(py::dict(py::arg("video") = p.video, py::arg("start") = p.segment.start,
                                    py::arg("end") = p.segment.end, py::arg("label") = p.label,
                                    py::arg("score") = p.score));
        }
        return py::make_tuple(proposals, video_accuracy(r.predictions, samples));
      },
      py::arg("config"), py::arg("manifest"), py::arg("checkpoint"), py::arg("split") = "test",
      "Returns (proposals, video accuracy).");

  m.def(
      "evaluate",
      [](const py::list& proposals, const std::filesystem::path& manifest, const std::string& split) {
        std::vector<Proposal> props;
        for (const auto& item : proposals) {
          const auto d = item.cast<py::dict>();
          props.push_back({d["video"].cast<std::string>(),
                           {d["start"].cast<std::size_t>(), d["end"].cast<std::size_t>()},
                           d["label"].cast<std::size_t>(),
                           d["score"].cast<double>()});
        }
        return report_dict(evaluate(props, Manifest::read(manifest).ground_truth(split)));
      },
      py::arg("proposals"), py::arg("manifest"), py::arg("split") = "test");

  m.def(
      "gradient_check",
      [](std::uint64_t seed, std::size_t seeds) {
        py::dict out;
        for (const auto& r : run_gradient_suite(seed, seeds)) out[py::str(r.name)] = r.max_relative_error;
        return out;
      },
      py::arg("first_seed") = 1, py::arg("seeds") = 10);
}
