// parallel.cpp - fixed-chunk parallel loops.

#include "inrreg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace inrreg {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int n){
    g_threads.store(std::max(1, n));
}

int thread_count(){
    return g_threads.load();
}

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)> &fn,
                     std::size_t chunk){
    const std::size_t chunks = chunk_count(n, chunk);
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(thread_count(), chunks));
    const auto run = [&](std::size_t c){
        const std::size_t begin = c * chunk;
        fn(c, begin, std::min(n, begin + chunk));
    };
    if(workers <= 1){
        for(std::size_t c = 0; c < chunks; ++c){
            run(c);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for(std::size_t w = 0; w < workers; ++w){
        pool.emplace_back([&]{
            for(std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)){
                try{
                    run(c);
                }catch(...){
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if(!error){
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for(auto &t : pool){
        t.join();
    }
    if(error){
        std::rethrow_exception(error);
    }
}

} // namespace inrreg
