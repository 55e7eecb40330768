#pragma once

// Local HTTP + WebSocket front end over scenes, body sampling and placement.
//
//   GET  /api/scenes                  scene list
//   GET  /api/scene/{id}/mesh         binary mesh with labels (see encode_mesh)
//   POST /api/scene/{id}/sdf          {"points": [[x,y,z], ...]} -> {"values": [...]}
//   GET  /api/bodies                  body list (one per library pose)
//   GET  /api/body/{id}/mesh          binary mesh, labels all zero
//   POST /api/sample                  {body_id, n, seed} -> feature-map ids and per-vertex summaries
//   POST /api/place                   {body_id, scene_id, fmap_id, init?, mode?, seed?, n_seeds?, refine_top?} -> {job}
//   GET  /api/job/{id}                state, energies, result
//   GET  /api/job/{id}/result         raw placement JSON, byte-identical to `hsi place`
//   POST /api/job/{id}/cancel
//   WS   /api/ws                      send {"type":"subscribe","job":N}; receive progress and state events

#include "hsi/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace hsi {

// Little-endian {u32 nV, u32 nF, f32 xyz * nV, u32 indices * 3nF, u16 labels * nV}.
std::string encode_mesh(const TriMesh& mesh, const std::vector<int>* labels);
struct DecodedMesh {
    TriMesh mesh;
    std::vector<std::uint16_t> labels;
};
DecodedMesh decode_mesh(std::string_view bytes);

struct ServiceOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080; // 0 picks a free port
    std::filesystem::path data; // scenes/*.ply (+ same-stem .sdf), *.ckpt
    int sdf_resolution = 128;   // for scenes without a stored SDF
    int io_threads = 2;
};

class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and starts serving in background threads; returns the bound port.
    unsigned short start();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();

    struct Impl;

private:
    std::shared_ptr<Impl> impl_;
};

} // namespace hsi
