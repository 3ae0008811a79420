//! Prioritized replay, double-Q targets, Adam training, and the
//! asynchronous actor/learner loop.
