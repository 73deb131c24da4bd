use crate::fault::{FaultKind, GuestFault};

/// Accesses below this address fault, so null pointers are caught.
pub const NULL_GUARD: u64 = 0x10000;

/// Flat little-endian guest memory with bounds-checked access.
pub struct Memory {
    bytes: Vec<u8>,
}

impl Memory {
    pub fn new(size: usize) -> Self {
        Memory { bytes: vec![0; size] }
    }

    pub fn size(&self) -> u64 {
        self.bytes.len() as u64
    }

    #[inline]
    fn range(&self, addr: u64, len: u64) -> Result<std::ops::Range<usize>, GuestFault> {
        match addr.checked_add(len) {
            Some(end) if addr >= NULL_GUARD && end <= self.bytes.len() as u64 => Ok(addr as usize..end as usize),
            _ => Err(GuestFault::host(FaultKind::OutOfBounds { addr, len })),
        }
    }

    #[inline]
    pub fn read_u64(&self, addr: u64) -> Result<u64, GuestFault> {
        let r = self.range(addr, 8)?;
        Ok(u64::from_le_bytes(self.bytes[r].try_into().unwrap()))
    }

    #[inline]
    pub fn write_u64(&mut self, addr: u64, value: u64) -> Result<(), GuestFault> {
        let r = self.range(addr, 8)?;
        self.bytes[r].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    pub fn read_bytes(&self, addr: u64, len: u64) -> Result<&[u8], GuestFault> {
        let r = self.range(addr, len)?;
        Ok(&self.bytes[r])
    }

    pub fn write_bytes(&mut self, addr: u64, data: &[u8]) -> Result<(), GuestFault> {
        let r = self.range(addr, data.len() as u64)?;
        self.bytes[r].copy_from_slice(data);
        Ok(())
    }

    /// Reads a NUL-terminated string of at most `max` bytes.
    pub fn read_cstr(&self, addr: u64, max: u64) -> Result<&[u8], GuestFault> {
        let avail = self.size().saturating_sub(addr).min(max);
        let bytes = self.read_bytes(addr, avail)?;
        match bytes.iter().position(|&b| b == 0) {
            Some(n) => Ok(&bytes[..n]),
            None => Err(GuestFault::host(FaultKind::OutOfBounds { addr, len: max })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_guard_and_end_fault() {
        let mut m = Memory::new(1 << 20);
        assert!(m.read_u64(0).is_err());
        assert!(m.read_u64(NULL_GUARD - 8).is_err());
        assert!(m.write_u64((1 << 20) - 4, 1).is_err());
        assert!(m.read_u64(u64::MAX - 3).is_err());
        m.write_u64(NULL_GUARD, 42).unwrap();
        assert_eq!(m.read_u64(NULL_GUARD).unwrap(), 42);
    }

    #[test]
    fn cstr() {
        let mut m = Memory::new(1 << 20);
        m.write_bytes(0x20000, b"hi\0").unwrap();
        assert_eq!(m.read_cstr(0x20000, 64).unwrap(), b"hi");
    }
}
