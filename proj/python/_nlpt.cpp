#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>
#include <string>

#include "nlpt/capacity.hpp"
#include "nlpt/cli.hpp"
#include "nlpt/energy.hpp"
#include "nlpt/error.hpp"
#include "nlpt/exhaustion.hpp"
#include "nlpt/wtforms.hpp"

namespace py = pybind11;
using namespace nlpt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a, std::size_t expected, const char* name) {
  if (a.ndim() != 1 || static_cast<std::size_t>(a.size()) != expected)
    throw py::value_error(std::string(name) + " must be a flat array with one value per node");
  return {a.data(), a.data() + a.size()};
}

py::dict curve_dict(const EnergyCurve& c) {
  py::dict d;
  d["tau"] = to_array(c.tau);
  d["I"] = to_array(c.I);
  d["dI"] = to_array(c.dI);
  d["eps"] = to_array(c.eps);
  d["eps_integral"] = to_array(c.eps_integral);
  d["monotone"] = to_array(c.monotone);
  return d;
}

BoundaryKind boundary_kind(const std::string& s) {
  if (s == "dirichlet") return BoundaryKind::Dirichlet;
  if (s == "compact") return BoundaryKind::CompactSupport;
  if (s == "neumann") return BoundaryKind::Neumann;
  if (s == "mixed") return BoundaryKind::Mixed;
  throw py::value_error("boundary must be dirichlet, compact, neumann or mixed");
}

}  // namespace

PYBIND11_MODULE(_nlpt, m) {
  m.doc() = "Nonlinear potential theory on model manifolds";
  m.attr("__version__") = cli::kToolVersion;

  // Raised with args (code name, message).
  static py::handle error = py::exception<Error>(m, "NlptError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(to_string(e.code()), e.what()).ptr());
    }
  });

  py::class_<CrossSection>(m, "CrossSection")
      .def_static("box", &CrossSection::box, py::arg("sides"))
      .def_static("disk", &CrossSection::disk, py::arg("radius"))
      .def_property_readonly("dim", &CrossSection::dim)
      .def_property_readonly("measure", &CrossSection::measure);

  py::class_<AngularDomain>(m, "AngularDomain")
      .def_static("whole", &AngularDomain::whole)
      .def_static("sector", &AngularDomain::sector, py::arg("lo"), py::arg("hi"))
      .def("measure", &AngularDomain::measure, py::arg("m"));

  py::class_<RadialProfile>(m, "RadialProfile")
      .def_static("constant", &RadialProfile::constant, py::arg("c"))
      .def_static("power", &RadialProfile::power, py::arg("c"), py::arg("exponent"))
      .def_static("exponential", &RadialProfile::exponential, py::arg("c"), py::arg("rate"))
      .def_static("sinh", &RadialProfile::sinh, py::arg("c"), py::arg("rate"))
      .def("__call__", &RadialProfile::operator(), py::arg("r"))
      .def("__repr__", &RadialProfile::describe);

  py::class_<ModelDomain>(m, "ModelDomain")
      .def_static("euclidean", &ModelDomain::euclidean, py::arg("n"), py::arg("r1") = 1.0)
      .def_static("kcylinder", &ModelDomain::kcylinder, py::arg("n"), py::arg("k"), py::arg("base"),
                  py::arg("r1") = 1.0)
      .def_static("cone", &ModelDomain::cone, py::arg("n"), py::arg("angular"), py::arg("r1") = 1.0)
      .def_static("warped", &ModelDomain::warped, py::arg("n"), py::arg("angular"), py::arg("alpha"),
                  py::arg("beta"), py::arg("r1") = 1.0, py::arg("r2") = kInf)
      .def_static("product", &ModelDomain::product, py::arg("factor"), py::arg("compact"))
      .def_readonly("n", &ModelDomain::n)
      .def_readonly("r1", &ModelDomain::r1)
      .def_readonly("r2", &ModelDomain::r2)
      .def("validate", &ModelDomain::validate)
      .def("__repr__", &ModelDomain::describe);

  py::class_<DiscretizedDomain>(m, "Grid")
      .def_property_readonly("size", &DiscretizedDomain::size)
      .def_property_readonly("dim", &DiscretizedDomain::dim)
      .def("__len__", &DiscretizedDomain::size)
      .def(
          "coordinates",
          [](const DiscretizedDomain& g) {
            py::array_t<double> out({static_cast<py::ssize_t>(g.size()), static_cast<py::ssize_t>(g.dim())});
            auto v = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < g.size(); ++i)
              for (int a = 0; a < g.dim(); ++a) v(i, a) = g.coordinates(i)[a];
            return out;
          },
          "Node coordinates in the adapted chart, one row per node.")
      .def("tags",
           [](const DiscretizedDomain& g) {
             std::vector<std::string> out;
             out.reserve(g.size());
             for (NodeTag t : g.tags()) out.emplace_back(to_string(t));
             return out;
           })
      .def("volume_weights", [](const DiscretizedDomain& g) {
        std::vector<double> w(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) w[i] = g.volume_weight(i);
        return to_array(w);
      });

  m.def(
      "build_grid",
      [](const ModelDomain& d, std::vector<std::size_t> resolution, double cut, bool plates) {
        GridRequest rq;
        rq.resolution = std::move(resolution);
        rq.cut = cut;
        if (plates) {
          rq.face_tags[{0, false}] = NodeTag::PlateA;
          rq.face_tags[{0, true}] = NodeTag::PlateB;
        }
        return build_grid(d, rq);
      },
      py::arg("domain"), py::arg("resolution"), py::arg("cut") = 0.0, py::arg("plates") = false,
      "Grid of a model domain truncated at the radial value cut. With plates the inner and outer radial faces "
      "become plates A and B.");
  m.def("box_grid", &compact_box_grid, py::arg("extents"), py::arg("resolution"));
  m.def("disk_grid", &compact_disk_grid, py::arg("radius"), py::arg("radial"), py::arg("angular"));
  m.def(
      "strip_grid",
      [](double width, double cut, std::size_t nx, std::size_t ny) {
        return cartesian_grid({-cut, 0.0}, {cut, width}, {nx, ny},
                              {{Face{0, false}, NodeTag::Cut}, {Face{0, true}, NodeTag::Cut}});
      },
      py::arg("width"), py::arg("cut"), py::arg("nx"), py::arg("ny"), "R x (0, width) truncated at |x1| = cut.");

  m.def(
      "classify",
      [](const ModelDomain& d, double p) {
        const auto c = classify_type(d, p);
        py::dict out;
        out["verdict"] = to_string(c.verdict);
        out["h0"] = c.h0;
        out["family"] = c.family;
        out["flux_constant"] = c.flux_constant;
        out["capacity_sequence"] = c.capacity_sequence;
        return out;
      },
      py::arg("domain"), py::arg("p"));

  py::class_<ExhaustionFunction>(m, "Exhaustion")
      .def_property_readonly("family", [](const ExhaustionFunction& h) { return to_string(h.family()); })
      .def_property_readonly("h0", &ExhaustionFunction::h0)
      .def_property_readonly("p", &ExhaustionFunction::p)
      .def_property_readonly("exponent", &ExhaustionFunction::exponent)
      .def_property_readonly("flux_constant", &ExhaustionFunction::flux_constant)
      .def("value_at", &ExhaustionFunction::value_at, py::arg("s"))
      .def("evaluate", [](const ExhaustionFunction& h, const DiscretizedDomain& g) { return to_array(h.evaluate(g)); });
  m.def("special_exhaustion", &make_special_exhaustion, py::arg("domain"), py::arg("p"));
  m.def(
      "verify_exhaustion",
      [](const ExhaustionFunction& h, const DiscretizedDomain& g, double p) {
        const auto v = verify_exhaustion(h, g, p);
        py::dict out;
        out["residual_max"] = v.pde_residual_max;
        out["residual_relative"] = v.pde_residual_relative;
        out["flux_relative_spread"] = v.flux_relative_spread;
        out["boundary_pairing"] = v.boundary_pairing_max;
        out["a1"] = v.a1;
        out["a2"] = v.a2;
        out["b2"] = v.b2;
        out["passed"] = v.passed();
        return out;
      },
      py::arg("h"), py::arg("grid"), py::arg("p"));
  m.def(
      "residual_max", [](const ExhaustionFunction& h, const DiscretizedDomain& g, double p) {
        return residual_summary(h, g, p).max_abs;
      },
      py::arg("h"), py::arg("grid"), py::arg("p"));

  m.def(
      "capacity",
      [](const DiscretizedDomain& g, double p, double tolerance) {
        SolverOptions so;
        so.tolerance = tolerance;
        so.record_history = false;
        CapacityResult r;
        {
          py::gil_scoped_release release;
          r = p_capacity(Condenser::from_tags(g), p, so);
        }
        py::dict out;
        out["value"] = r.value;
        out["converged"] = r.converged;
        out["iterations"] = r.iterations;
        out["minimizer"] = to_array(r.minimizer);
        return out;
      },
      py::arg("grid"), py::arg("p"), py::arg("tolerance") = 1e-8,
      "p-capacity of the condenser given by the PlateA and PlateB tags of the grid.");
  m.def("capacity_via_exhaustion", &capacity_via_exhaustion, py::arg("h"), py::arg("grid"), py::arg("p"),
        py::arg("t1"), py::arg("t2"));

  py::class_<StructureField>(m, "StructureField")
      .def_static("p_laplace", &StructureField::p_laplace, py::arg("p"))
      .def_static("anisotropic", &StructureField::anisotropic_diagonal, py::arg("p"), py::arg("weights"))
      .def_property_readonly("p", &StructureField::p)
      .def_property_readonly("q", &StructureField::q)
      .def_property_readonly("nu0", &StructureField::nu0)
      .def_property_readonly("nu1", &StructureField::nu1)
      .def_property_readonly("nu2", &StructureField::nu2)
      .def("__repr__", &StructureField::describe);
  m.def("wt2_implies_wt1_constant", &wt2_implies_wt1_constant, py::arg("nu1"), py::arg("nu2"), py::arg("p"));
  m.def(
      "wt_chain",
      [](const StructureField& field, const DiscretizedDomain& g, int pairs, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const double nu0 = field.nu0();
        int wt2 = 0, failures = 0;
        for (int k = 0; k < pairs; ++k) {
          const auto pair = random_form_pair(g, field, rng);
          if (!check_wt2(pair, field.nu1(), field.nu2(), field.p()).passed) continue;
          ++wt2;
          failures += !check_wt1(pair, nu0, field.p()).passed;
        }
        py::dict out;
        out["pairs"] = pairs;
        out["wt2_passed"] = wt2;
        out["chain_failures"] = failures;
        return out;
      },
      py::arg("field"), py::arg("grid"), py::arg("pairs") = 100, py::arg("seed") = 1,
      "Random scalar pairs: how many pass WT2 and how many of those then fail WT1 with nu0.");
  m.def(
      "maximum_principle",
      [](const DiscretizedDomain& g, const StructureField& field, const std::string& kind) {
        if (kind != "neumann" && kind != "dirichlet") throw py::value_error("kind must be neumann or dirichlet");
        const auto v = maximum_principle_check(
            g, field, kind == "neumann" ? MaximumPrincipleKind::NeumannType : MaximumPrincipleKind::DirichletType);
        py::dict out;
        out["oscillation"] = v.oscillation;
        out["max_theta"] = v.max_theta;
        out["passed"] = v.passed;
        return out;
      },
      py::arg("grid"), py::arg("field"), py::arg("kind") = "neumann");

  m.def(
      "energy_integral",
      [](const DiscretizedDomain& g, const Array& f, const Array& h, const StructureField& field, double tau) {
        const auto pair = make_form_pair(g, to_vector(f, g.size(), "f"), field);
        const auto hv = to_vector(h, g.size(), "h");
        return energy_integral(pair, hv, tau);
      },
      py::arg("grid"), py::arg("f"), py::arg("h"), py::arg("field"), py::arg("tau"));
  m.def(
      "epsilon",
      [](const DiscretizedDomain& g, const Array& f, const Array& h, const StructureField& field, double tau) {
        const auto pair = make_form_pair(g, to_vector(f, g.size(), "f"), field);
        const auto hv = to_vector(h, g.size(), "h");
        return epsilon_for_form(pair, hv, tau).value;
      },
      py::arg("grid"), py::arg("f"), py::arg("h"), py::arg("field"), py::arg("tau"));
  m.def(
      "growth",
      [](const DiscretizedDomain& g, const Array& f, const Array& h, const StructureField& field,
         const std::vector<double>& taus, double nu1, const std::string& boundary) {
        const auto pair = make_form_pair(g, to_vector(f, g.size(), "f"), field);
        const auto hv = to_vector(h, g.size(), "h");
        GrowthOptions opt;
        opt.boundary = boundary_kind(boundary);
        const auto r = growth_verifier(pair, hv, field.p(), nu1, taus, opt);
        py::dict out = curve_dict(r.curve);
        out["degenerate"] = r.degenerate;
        out["differential_margin"] = r.differential_margin;
        out["monotone_dip"] = r.monotone_dip;
        out["integrated_excess"] = r.integrated_excess;
        out["passed"] = r.passed();
        return out;
      },
      py::arg("grid"), py::arg("f"), py::arg("h"), py::arg("field"), py::arg("taus"), py::arg("nu1") = 1.0,
      py::arg("boundary") = "dirichlet");

  m.def(
      "run_config",
      [](const std::string& yaml, const std::string& base_dir) {
        cli::Report r;
        {
          py::gil_scoped_release release;
          r = cli::run(cli::parse_config(yaml, base_dir));
        }
        py::object curve = py::none();
        if (r.curve && !r.curve->tau.empty()) curve = py::str(cli::emit_curve(r));
        return py::make_tuple(r.json.dump(), curve);
      },
      py::arg("yaml"), py::arg("base_dir") = ".",
      "Runs a YAML task config. Returns the JSON report text and the curve CSV (or None).");
}
