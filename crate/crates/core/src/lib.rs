pub mod agent;
pub mod corpus;
pub mod evaluation;
pub mod model;
pub mod task;
pub mod training;
pub mod world;
