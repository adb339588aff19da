// Python bindings for the gateway: layouts, wire codec, server and client.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "alchemist/bench.hpp"
#include "alchemist/client.hpp"
#include "alchemist/error.hpp"
#include "alchemist/layout.hpp"
#include "alchemist/server.hpp"
#include "alchemist/testlib.hpp"
#include "alchemist/wire.hpp"

namespace py = pybind11;
using namespace alchemist;

namespace {

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_dense(const Matrix& array) {
    if (array.ndim() != 2) throw py::value_error("expected a 2-D array");
    DenseMatrix out(static_cast<Index>(array.shape(0)), static_cast<Index>(array.shape(1)));
    if (!out.values.empty()) std::memcpy(out.values.data(), array.data(), out.values.size() * sizeof(double));
    return out;
}

py::array_t<double> to_numpy(DenseMatrix&& dense) {
    py::array_t<double> out({static_cast<py::ssize_t>(dense.rows), static_cast<py::ssize_t>(dense.cols)});
    if (!dense.values.empty())
        std::memcpy(out.mutable_data(), dense.values.data(), dense.values.size() * sizeof(double));
    return out;
}

py::bytes to_py(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes from_py(const py::bytes& b) {
    const std::string_view view = b;
    Bytes out(view.size());
    if (!view.empty()) std::memcpy(out.data(), view.data(), view.size());
    return out;
}

Stride to_stride(const std::tuple<Index, Index, Index>& t) {
    return {std::get<0>(t), std::get<1>(t), std::get<2>(t)};
}

std::tuple<Index, Index, Index> from_stride(const Stride& s) { return {s.start, s.stride, s.count}; }

std::vector<RowRange> to_ranges(const std::vector<std::pair<Index, Index>>& ranges) {
    std::vector<RowRange> out;
    for (const auto& [b, e] : ranges) out.push_back({b, e});
    return out;
}

py::dict block_dict(const BlockMessage& b) {
    py::dict d;
    d["handle"] = b.selection.handle;
    d["rows"] = from_stride(b.selection.rows);
    d["cols"] = from_stride(b.selection.cols);
    d["type"] = b.type;
    d["offset"] = b.offset;
    d["values"] = block_values(b);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Matrix gateway: distributed layouts, wire codec, server and client";

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
    error_type.call_once_and_store_result(
        [&] { return py::object(py::exception<Error>(m, "AlchemistError", PyExc_RuntimeError)); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const py::object& type = error_type.get_stored();
            py::object inst = type(e.what());
            inst.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(type.ptr(), inst.ptr());
        }
    });

    py::enum_<DistScheme>(m, "DistScheme")
        .value("CIRC", DistScheme::kCirc)
        .value("STAR", DistScheme::kStar)
        .value("MC", DistScheme::kMC)
        .value("MR", DistScheme::kMR)
        .value("VC", DistScheme::kVC)
        .value("VR", DistScheme::kVR);

    py::enum_<ElemType>(m, "ElemType").value("F64", ElemType::kF64).value("F32", ElemType::kF32);

    py::enum_<Command>(m, "Command")
        .value("HANDSHAKE", Command::kHandshake)
        .value("REQUEST_WORKERS", Command::kRequestWorkers)
        .value("LOAD_LIBRARY", Command::kLoadLibrary)
        .value("CREATE_MATRIX", Command::kCreateMatrix)
        .value("SEND_BLOCK", Command::kSendBlock)
        .value("FETCH_BLOCK", Command::kFetchBlock)
        .value("RUN_TASK", Command::kRunTask)
        .value("LIST_WORKERS", Command::kListWorkers)
        .value("CLOSE_SESSION", Command::kCloseSession)
        .value("ERROR", Command::kError)
        .value("OK", Command::kOk);

    py::class_<DistPair>(m, "DistPair")
        .def(py::init([](DistScheme c, DistScheme r) { return DistPair{c, r}; }), py::arg("col"), py::arg("row"))
        .def(py::init([](const std::string& text) { return parse_pair(text); }))
        .def_readwrite("col", &DistPair::col)
        .def_readwrite("row", &DistPair::row)
        .def_property_readonly("legal", [](const DistPair& p) { return is_legal(p); })
        .def("__eq__", [](const DistPair& a, const DistPair& b) { return a == b; })
        .def("__hash__", [](const DistPair& p) { return static_cast<int>(p.col) * 16 + static_cast<int>(p.row); })
        .def("__str__", [](const DistPair& p) { return to_string(p); })
        .def("__repr__", [](const DistPair& p) { return "DistPair('" + to_string(p) + "')"; });
    m.def("legal_pairs", [] { return std::vector<DistPair>(kLegalPairs.begin(), kLegalPairs.end()); });

    py::class_<ProcessGrid>(m, "ProcessGrid")
        .def(py::init<std::size_t, std::size_t>(), py::arg("rows"), py::arg("cols"))
        .def_property_readonly("rows", &ProcessGrid::rows)
        .def_property_readonly("cols", &ProcessGrid::cols)
        .def_property_readonly("size", &ProcessGrid::size)
        .def("rank_at", &ProcessGrid::rank_at)
        .def("__repr__", [](const ProcessGrid& g) {
            return "ProcessGrid(" + std::to_string(g.rows()) + ", " + std::to_string(g.cols()) + ")";
        });

    m.def("make_grid", &make_grid, py::arg("workers"), py::arg("force_rows") = py::none());
    m.def("owner", &owner, py::arg("grid"), py::arg("pair"), py::arg("i"), py::arg("j"));
    m.def(
        "local_of",
        [](const ProcessGrid& g, DistPair p, Index i, Index j) {
            const auto lc = local_of(g, p, i, j);
            return std::make_tuple(lc.rank, lc.li, lc.lj);
        },
        py::arg("grid"), py::arg("pair"), py::arg("i"), py::arg("j"));
    m.def("global_of", &global_of, py::arg("grid"), py::arg("pair"), py::arg("rank"), py::arg("li"), py::arg("lj"));
    m.def("local_shape", &local_shape, py::arg("grid"), py::arg("pair"), py::arg("rank"), py::arg("m"),
          py::arg("n"));
    m.def(
        "owned_slice",
        [](const ProcessGrid& g, DistPair p, Rank r, Index rows, Index cols) {
            const auto s = owned_slice(g, p, r, rows, cols);
            return std::make_pair(from_stride(s.rows), from_stride(s.cols));
        },
        py::arg("grid"), py::arg("pair"), py::arg("rank"), py::arg("m"), py::arg("n"));
    m.def(
        "even_partitioning",
        [](Index rows, std::size_t parts) {
            std::vector<std::pair<Index, Index>> out;
            for (const auto& r : even_partitioning(rows, parts)) out.emplace_back(r.begin, r.end);
            return out;
        },
        py::arg("rows"), py::arg("parts"));

    py::class_<TransferEntry>(m, "TransferEntry")
        .def_readonly("partition", &TransferEntry::partition)
        .def_readonly("rank", &TransferEntry::rank)
        .def_readonly("bytes", &TransferEntry::bytes)
        .def_readonly("fragments", &TransferEntry::fragments)
        .def_readonly("messages", &TransferEntry::messages);
    py::class_<TransferPlan>(m, "TransferPlan")
        .def_readonly("entries", &TransferPlan::entries)
        .def_readonly("total_bytes", &TransferPlan::total_bytes)
        .def_readonly("total_fragments", &TransferPlan::total_fragments)
        .def_readonly("total_messages", &TransferPlan::total_messages);
    m.def(
        "plan_transfer",
        [](const std::vector<std::pair<Index, Index>>& partitioning, const ProcessGrid& g, DistPair p, Index rows,
           Index cols, std::size_t elem_bytes, std::size_t buffer_bytes) {
            return plan_transfer(to_ranges(partitioning), g, p, rows, cols, elem_bytes, buffer_bytes);
        },
        py::arg("partitioning"), py::arg("grid"), py::arg("pair"), py::arg("m"), py::arg("n"),
        py::arg("elem_bytes") = 8, py::arg("buffer_bytes") = kDefaultBufferBytes);

    // -- wire codec ----------------------------------------------------------

    m.attr("FRAME_HEADER_BYTES") = kFrameHeaderBytes;
    m.attr("BLOCK_META_BYTES") = kBlockMetaBytes;
    m.attr("MIN_BUFFER_BYTES") = kMinBufferBytes;
    m.attr("DEFAULT_BUFFER_BYTES") = kDefaultBufferBytes;

    py::class_<HandleRef>(m, "Handle")
        .def(py::init([](HandleId id) { return HandleRef{id}; }), py::arg("id"))
        .def_readwrite("id", &HandleRef::id)
        .def("__eq__", [](const HandleRef& a, const HandleRef& b) { return a == b; })
        .def("__repr__", [](const HandleRef& h) { return "Handle(" + std::to_string(h.id) + ")"; });

    py::class_<MatrixInfo>(m, "MatrixInfo")
        .def(py::init([](HandleId id, Index rows, Index cols, DistPair layout, ElemType type) {
                 return MatrixInfo{id, rows, cols, layout, type};
             }),
             py::arg("id"), py::arg("rows"), py::arg("cols"), py::arg("layout") = kVcStar,
             py::arg("type") = ElemType::kF64)
        .def_readonly("id", &MatrixInfo::id)
        .def_readonly("rows", &MatrixInfo::rows)
        .def_readonly("cols", &MatrixInfo::cols)
        .def_readonly("layout", &MatrixInfo::layout)
        .def_readonly("type", &MatrixInfo::type)
        .def_property_readonly("shape", [](const MatrixInfo& i) { return std::make_pair(i.rows, i.cols); })
        .def("__eq__", [](const MatrixInfo& a, const MatrixInfo& b) { return a == b; })
        .def("__repr__", [](const MatrixInfo& i) {
            return "MatrixInfo(id=" + std::to_string(i.id) + ", shape=(" + std::to_string(i.rows) + ", " +
                   std::to_string(i.cols) + "), layout=" + to_string(i.layout) + ")";
        });

    m.def(
        "encode_frame",
        [](Command c, SessionId session, const py::bytes& payload, std::size_t buffer) {
            return to_py(encode_frame(Frame{kProtocolVersion, c, session, from_py(payload)}, buffer));
        },
        py::arg("command"), py::arg("session"), py::arg("payload"), py::arg("buffer_bytes") = kDefaultBufferBytes);
    m.def(
        "decode_frame",
        [](const py::bytes& data, std::size_t buffer) {
            const Bytes raw = from_py(data);
            const auto d = decode_frame(raw, buffer);
            return py::make_tuple(d.frame.command, d.frame.session_id, to_py(d.frame.payload), d.consumed);
        },
        py::arg("data"), py::arg("buffer_bytes") = kDefaultBufferBytes);
    m.def(
        "encode_task",
        [](LibraryId lib, const std::string& fn, std::vector<Value> args) {
            return to_py(encode_task(TaskRequest{lib, fn, std::move(args)}));
        },
        py::arg("library"), py::arg("function"), py::arg("args"));
    m.def(
        "decode_task",
        [](const py::bytes& payload) {
            auto t = decode_task(from_py(payload));
            return py::make_tuple(t.library, t.function, t.args);
        },
        py::arg("payload"));
    m.def(
        "chunk_block",
        [](HandleId handle, std::tuple<Index, Index, Index> rows, std::tuple<Index, Index, Index> cols,
           std::vector<double> values, std::size_t buffer, ElemType type) {
            const BlockMessage block = make_block({handle, to_stride(rows), to_stride(cols)}, values, type);
            std::vector<py::bytes> out;
            for (const auto& f : chunk_block(block, buffer)) out.push_back(to_py(encode_frame(f, buffer)));
            return out;
        },
        py::arg("handle"), py::arg("rows"), py::arg("cols"), py::arg("values"), py::arg("buffer_bytes"),
        py::arg("type") = ElemType::kF64);
    m.def(
        "decode_block", [](const py::bytes& payload) { return block_dict(decode_block(from_py(payload))); },
        py::arg("payload"));

    // -- server --------------------------------------------------------------

    py::class_<WorkerInfo>(m, "WorkerInfo")
        .def_readonly("rank", &WorkerInfo::rank)
        .def_readonly("host", &WorkerInfo::host)
        .def_readonly("port", &WorkerInfo::port)
        .def_readonly("session", &WorkerInfo::session)
        .def("__repr__", [](const WorkerInfo& w) {
            return "WorkerInfo(rank=" + std::to_string(w.rank) + ", " + w.host + ":" + std::to_string(w.port) + ")";
        });

    py::class_<Gateway>(m, "Gateway")
        .def(py::init([](std::size_t workers, std::uint16_t port, const std::string& host,
                         std::optional<std::string> log_path, std::size_t max_buffer) {
                 GatewayOptions o;
                 o.num_workers = workers;
                 o.host = host;
                 o.log_to_stdout = false;
                 o.log_path = std::move(log_path);
                 o.max_buffer_bytes = max_buffer;
                 if (port == 0) return Gateway::start_on_free_ports(o);
                 o.start_port = port;
                 return Gateway::start(o);
             }),
             py::arg("workers") = 1, py::arg("port") = 0, py::arg("host") = "127.0.0.1",
             py::arg("log_path") = py::none(), py::arg("max_buffer_bytes") = kDefaultBufferBytes)
        .def_property_readonly("host", &Gateway::host)
        .def_property_readonly("port", &Gateway::driver_port)
        .def_property_readonly("workers", &Gateway::workers)
        .def_property_readonly("free_workers", &Gateway::free_worker_count)
        .def_property_readonly("live_sessions", &Gateway::live_sessions)
        .def("stop", &Gateway::stop, py::call_guard<py::gil_scoped_release>())
        .def("__enter__", [](Gateway& g) -> Gateway& { return g; })
        .def("__exit__", [](Gateway& g, py::args) {
            py::gil_scoped_release nogil;
            g.stop();
        });

    // -- client --------------------------------------------------------------

    py::class_<ClientSession>(m, "ClientSession")
        .def(py::init([](const std::string& host, std::uint16_t port, std::size_t buffer) {
                 py::gil_scoped_release nogil;
                 return std::make_unique<ClientSession>(ClientSession::connect(host, port, ClientOptions{buffer}));
             }),
             py::arg("host"), py::arg("port"), py::arg("buffer_bytes") = kDefaultBufferBytes)
        .def_static(
            "from_address_file",
            [](const std::string& path, std::size_t buffer) {
                py::gil_scoped_release nogil;
                return std::make_unique<ClientSession>(ClientSession::from_address_file(path, ClientOptions{buffer}));
            },
            py::arg("path"), py::arg("buffer_bytes") = kDefaultBufferBytes)
        .def_property_readonly("id", &ClientSession::id)
        .def_property_readonly("buffer_bytes", &ClientSession::buffer_bytes)
        .def_property_readonly("is_open", &ClientSession::is_open)
        .def_property_readonly("grid", &ClientSession::grid)
        .def_property_readonly("workers", &ClientSession::workers)
        .def("request_workers", &ClientSession::request_workers, py::arg("count"),
             py::call_guard<py::gil_scoped_release>())
        .def("load_library", &ClientSession::load_library, py::arg("name"), py::call_guard<py::gil_scoped_release>())
        .def(
            "send_matrix",
            [](ClientSession& s, const Matrix& a, DistPair layout, ElemType type) {
                DenseMatrix dense = to_dense(a);
                py::gil_scoped_release nogil;
                return s.send_matrix(dense, layout, type);
            },
            py::arg("matrix"), py::arg("layout") = kVcStar, py::arg("type") = ElemType::kF64)
        .def(
            "fetch_matrix",
            [](ClientSession& s, const MatrixInfo& info) {
                DenseMatrix out;
                {
                    py::gil_scoped_release nogil;
                    out = s.fetch_matrix(info);
                }
                return to_numpy(std::move(out));
            },
            py::arg("info"))
        .def(
            "fetch_matrix",
            [](ClientSession& s, HandleId id) {
                DenseMatrix out;
                {
                    py::gil_scoped_release nogil;
                    out = s.fetch_matrix(id);
                }
                return to_numpy(std::move(out));
            },
            py::arg("handle"))
        .def(
            "run",
            [](ClientSession& s, const std::string& lib, const std::string& fn, std::vector<Value> args) {
                py::gil_scoped_release nogil;
                return s.run(lib, fn, std::move(args));
            },
            py::arg("library"), py::arg("function"), py::arg("args") = std::vector<Value>{})
        .def("close", &ClientSession::close, py::call_guard<py::gil_scoped_release>())
        .def("__enter__", [](ClientSession& s) -> ClientSession& { return s; })
        .def("__exit__", [](ClientSession& s, py::args) {
            py::gil_scoped_release nogil;
            if (s.is_open()) s.close();
        });

    // -- simulator -----------------------------------------------------------

    py::class_<testlib::Simulator>(m, "Simulator")
        .def(py::init<>())
        .def("reset",
             [](testlib::Simulator& sim) {
                 const auto& s = sim.reset();
                 return py::make_tuple(s.x, s.target, s.step_count);
             })
        .def(
            "step",
            [](testlib::Simulator& sim, double action) {
                const auto& s = sim.step(action);
                return py::make_tuple(s.x, s.target, s.step_count, sim.score());
            },
            py::arg("action"))
        .def_property_readonly("state",
                               [](const testlib::Simulator& sim) {
                                   const auto& s = sim.state();
                                   return py::make_tuple(s.x, s.target, s.step_count);
                               })
        .def_property_readonly("score", &testlib::Simulator::score);

    m.def("parse_byte_size", &bench::parse_byte_size, py::arg("text"));
}
