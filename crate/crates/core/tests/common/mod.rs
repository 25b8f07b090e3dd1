#![allow(dead_code)]

pub mod fock_properties;
