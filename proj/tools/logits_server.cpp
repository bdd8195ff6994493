// serves a local backend over the HTTP logits protocol, mostly for testing
// remote-backend clients without a real inference service

#include <cstdio>
#include <string>

#include <CLI/CLI.hpp>
#include <httplib.h>

#include "ccd/backend_factory.hpp"
#include "ccd/errors.hpp"

#include "../src/logits_service.hpp"

int main(int argc, char ** argv) {
    CLI::App app{"serve a table/ngram backend over HTTP"};
    std::string backend_spec;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string port_file;
    app.add_option("--backend", backend_spec, "backend spec (table:FILE or ngram:FILE)")
        ->required();
    app.add_option("--host", host, "address to bind");
    app.add_option("--port", port, "port to bind (0 picks a free port)");
    app.add_option("--port-file", port_file, "write the bound port to this file after bind");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        auto backend = ccd::make_backend(backend_spec);
        httplib::Server server;
        ccd::register_logits_routes(server, *backend);

        int bound = port;
        if (port == 0) {
            bound = server.bind_to_any_port(host);
            if (bound <= 0) {
                std::fprintf(stderr, "error: cannot bind to %s\n", host.c_str());
                return 3;
            }
        } else if (!server.bind_to_port(host, port)) {
            std::fprintf(stderr, "error: cannot bind to %s:%d\n", host.c_str(), port);
            return 3;
        }
        if (!port_file.empty()) {
            std::FILE * f = std::fopen(port_file.c_str(), "w");
            if (!f) {
                std::fprintf(stderr, "error: cannot write port file '%s'\n", port_file.c_str());
                return 3;
            }
            std::fprintf(f, "%d\n", bound);
            std::fclose(f);
        }
        std::fprintf(stderr, "serving %s on http://%s:%d\n", backend_spec.c_str(), host.c_str(),
                     bound);
        server.listen_after_bind();
        return 0;
    } catch (const ccd::ccd_error & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
