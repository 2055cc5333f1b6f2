#include "grasp/checkpoint.hpp"
#include "grasp/config.hpp"
#include "grasp/harness.hpp"
#include "grasp/orthogonal.hpp"
#include "grasp/report.hpp"
#include "grasp/synthetic.hpp"
#include "grasp/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace grasp;

namespace {

// JSON crosses the boundary as text; dicts come back as plain Python objects.
py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_py(const py::handle& obj) {
  if (obj.is_none()) return Json::object();
  return Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

Transform as_transform(const py::handle& t, int dim) {
  if (t.is_none()) return Transform::identity(dim);
  if (py::isinstance<Checkpoint>(t)) return t.cast<const Checkpoint&>().model.evaluation_transform();
  Matrix W = t.cast<Matrix>();
  const bool orthogonal = W.rows() == W.cols() &&
                          (W.transpose() * W - Matrix::Identity(W.rows(), W.cols())).cwiseAbs().maxCoeff() < 1e-8;
  return Transform::linear(std::move(W), Provenance::kIdentity, orthogonal);
}

}  // namespace

PYBIND11_MODULE(_grasp, m) {
  m.doc() = "Prefix-structured orthogonal transforms for frozen image-text embeddings.";

  // Held for the life of the process, like the module itself.
  static py::handle error_type = py::exception<Error>(m, "GraspError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(std::string(e.what()));
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("ratio_contract", [](int dim) { return to_py(to_json(InterfaceContract::ratio(dim))); }, py::arg("dim"));
  m.def(
      "prefix_score",
      [](const Vector& img, const Vector& txt, int k, double tau) { return prefix_score(img, txt, k, tau); },
      py::arg("image"), py::arg("text"), py::arg("k"), py::arg("tau"));

  m.def("cayley", [](const Matrix& B) { return cayley_build(B).R; }, py::arg("B"));
  m.def(
      "butterfly",
      [](const Matrix& angles, int dim) {
        ButterflyParams p;
        p.dim = dim;
        p.stacks = static_cast<int>(angles.rows()) / log2_exact(dim);
        p.angles = angles;
        return butterfly_build(p).R;
      },
      py::arg("angles"), py::arg("dim"));
  m.def("butterfly_pairs", &butterfly_pairs, py::arg("dim"), py::arg("stage"));
  m.def("random_orthogonal", [](int dim, std::uint64_t seed) { return random_orthogonal(dim, seed).R; },
        py::arg("dim"), py::arg("seed") = 0);
  m.def("permutation_energy", &permutation_energy, py::arg("R"));
  m.def(
      "full_drift",
      [](const Matrix& original, const Matrix& transformed) {
        const Drift d = full_drift(original, transformed);
        py::dict out;
        out["max_abs"] = d.max_abs;
        out["pairs"] = d.pairs;
        out["exhaustive"] = d.exhaustive;
        return out;
      },
      py::arg("original"), py::arg("transformed"));

  py::class_<EmbeddingCache>(m, "Cache")
      .def_readonly("dim", &EmbeddingCache::dim)
      .def("__len__", &EmbeddingCache::size)
      .def_readonly("ids", &EmbeddingCache::ids)
      .def_property_readonly("image", [](const EmbeddingCache& c) -> const MatrixF& { return c.image; })
      .def("view", [](const EmbeddingCache& c, const std::string& v) -> MatrixF { return c.view(parse_view(v)); })
      .def("negative",
           [](const EmbeddingCache& c, const std::string& t) -> MatrixF { return c.negative(parse_neg_type(t)); })
      .def("split", [](const EmbeddingCache& c, const std::string& id) {
        const auto it = c.split_table.find(id);
        if (it == c.split_table.end()) throw Error(ErrorCode::kMissingSplit, "no split for " + id);
        return std::string(to_string(it->second));
      })
      .def("save", [](const EmbeddingCache& c, const std::filesystem::path& dir) { write_cache(c, dir); });
  m.def("load_cache", &load_cache, py::arg("manifest"));

  m.def(
      "synthesize",
      [](const py::object& spec, std::optional<std::uint64_t> seed) {
        SyntheticSpec s = synthetic_from_json(from_py(spec));
        if (seed) s.seed = *seed;
        SyntheticCorpus corpus = generate_synthetic(s);
        return py::make_tuple(std::move(corpus.cache), corpus.oracle.R);
      },
      py::arg("spec") = py::none(), py::arg("seed") = py::none(),
      "Returns (cache, oracle) where oracle maps mixed rows back to the latent basis.");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("epoch", &Checkpoint::epoch)
      .def_readonly("val_stair", &Checkpoint::val_stair)
      .def_readonly("val_drift", &Checkpoint::val_drift)
      .def_property_readonly("variant",
                             [](const Checkpoint& c) { return std::string(to_string(c.model.spec().variant)); })
      .def_property_readonly("contract", [](const Checkpoint& c) { return to_py(to_json(c.contract)); })
      .def_property_readonly("matrix",
                             [](const Checkpoint& c) -> py::object {
                               const Transform t = c.model.evaluation_transform();
                               if (!t.is_linear()) return py::none();
                               return py::cast(t.matrix());
                             })
      .def_property_readonly("trace",
                             [](const Checkpoint& c) {
                               py::list out;
                               for (const auto& r : c.trace) {
                                 py::dict d;
                                 d["epoch"] = r.epoch;
                                 d["val_stair"] = r.val_stair;
                                 d["val_hard_avg"] = r.val_hard_avg;
                                 d["val_drift"] = r.val_drift;
                                 py::list enabled;
                                 for (NegType t : kAllNegTypes) {
                                   if (r.enabled[index(t)]) enabled.append(std::string(to_string(t)));
                                 }
                                 d["enabled"] = enabled;
                                 out.append(d);
                               }
                               return out;
                             })
      .def("apply", [](const Checkpoint& c, const Matrix& rows) { return c.model.evaluation_transform().apply(rows); })
      .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(c, path); });
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "train",
      [](const EmbeddingCache& cache, const py::object& config) {
        const TrainConfig cfg = train_config_from_json(from_py(config), cache.dim);
        py::gil_scoped_release release;
        return train(cfg, cache);
      },
      py::arg("cache"), py::arg("config") = py::none());

  m.def(
      "diagnose",
      [](const EmbeddingCache& cache, const py::object& transform, const py::object& contract,
         const std::string& pool, const std::string& split, std::uint64_t seed) {
        const Transform t = as_transform(transform, cache.dim);
        InterfaceContract c = InterfaceContract::ratio(cache.dim);
        if (!contract.is_none()) {
          c = contract_from_json(from_py(contract), cache.dim);
        } else if (py::isinstance<Checkpoint>(transform)) {
          c = transform.cast<const Checkpoint&>().contract;
        }
        DiagnosticOptions opts;
        opts.pool_mode = parse_pool_mode(pool);
        opts.query_split = parse_split(split);
        opts.seed = seed;
        DiagnosticReport rep;
        {
          py::gil_scoped_release release;
          rep = diagnose(cache, t, c, opts);
        }
        return to_py(to_json(rep));
      },
      py::arg("cache"), py::arg("transform") = py::none(), py::arg("contract") = py::none(),
      py::arg("pool") = "full", py::arg("split") = "test", py::arg("seed") = 0,
      "transform: None (identity), a Checkpoint or a D x D matrix.");

  m.def(
      "gradcheck",
      [](int dim, std::uint64_t seed) {
        py::list out;
        for (const auto& row : run_gradcheck(dim, seed)) out.append(to_py(to_json(row)));
        return out;
      },
      py::arg("dim") = 8, py::arg("seed") = 0);

  m.def(
      "cost",
      [](int dim, std::uint64_t gallery, int precision) {
        const InterfaceContract c = InterfaceContract::ratio(dim);
        return to_py(to_json(estimate_cost(dim, gallery, c.prefixes, precision)));
      },
      py::arg("dim") = 512, py::arg("gallery") = 10000000, py::arg("precision") = 2);
}
