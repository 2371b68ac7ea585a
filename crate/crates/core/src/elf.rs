//! Minimal readers for `ar` static archives and ELF symbol tables.
//!
//! Only what slicing needs is decoded: archive members (GNU and BSD name
//! conventions), the archive symbol index, and `.symtab` entries of ELF
//! relocatable objects and executables, for both classes and byte orders.

use std::path::Path;

use thiserror::Error;

const AR_MAGIC: &[u8] = b"!<arch>\n";
const THIN_MAGIC: &[u8] = b"!<thin>\n";
const AR_HEADER_LEN: usize = 60;

const SHT_SYMTAB: u32 = 2;
const SHN_UNDEF: u16 = 0;

#[derive(Debug, Error)]
pub enum ElfError {
    #[error("not an ar archive")]
    NotAnArchive,
    #[error("thin archives are not supported")]
    ThinArchive,
    #[error("truncated or malformed {0}")]
    Malformed(&'static str),
    #[error("member `{0}` is not an ELF object")]
    NotElf(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolBinding {
    Local,
    Global,
    Weak,
    Other(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolType {
    NoType,
    Object,
    Func,
    Section,
    File,
    Common,
    Tls,
    GnuIfunc,
    Other(u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub binding: SymbolBinding,
    pub kind: SymbolType,
    pub defined: bool,
    pub size: u64,
}

impl Symbol {
    pub fn is_defined_function(&self) -> bool {
        self.defined && self.kind == SymbolType::Func
    }

    pub fn is_global(&self) -> bool {
        matches!(self.binding, SymbolBinding::Global | SymbolBinding::Weak)
    }
}

struct Reader<'a> {
    data: &'a [u8],
    big_endian: bool,
}

impl<'a> Reader<'a> {
    fn bytes(&self, off: usize, len: usize) -> Result<&'a [u8], ElfError> {
        off.checked_add(len)
            .and_then(|end| self.data.get(off..end))
            .ok_or(ElfError::Malformed("elf"))
    }

    fn u8(&self, off: usize) -> Result<u8, ElfError> {
        Ok(self.bytes(off, 1)?[0])
    }

    fn u16(&self, off: usize) -> Result<u16, ElfError> {
        let b: [u8; 2] = self.bytes(off, 2)?.try_into().expect("len 2");
        Ok(if self.big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32(&self, off: usize) -> Result<u32, ElfError> {
        let b: [u8; 4] = self.bytes(off, 4)?.try_into().expect("len 4");
        Ok(if self.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn u64(&self, off: usize) -> Result<u64, ElfError> {
        let b: [u8; 8] = self.bytes(off, 8)?.try_into().expect("len 8");
        Ok(if self.big_endian { u64::from_be_bytes(b) } else { u64::from_le_bytes(b) })
    }

    fn cstr(&self, off: usize) -> Result<&'a str, ElfError> {
        let tail = self.data.get(off..).ok_or(ElfError::Malformed("string table"))?;
        let end = tail
            .iter()
            .position(|&b| b == 0)
            .ok_or(ElfError::Malformed("string table"))?;
        std::str::from_utf8(&tail[..end]).map_err(|_| ElfError::Malformed("symbol name"))
    }
}

pub fn is_elf(data: &[u8]) -> bool {
    data.starts_with(b"\x7fELF")
}

struct Section {
    kind: u32,
    offset: u64,
    size: u64,
    link: u32,
    entsize: u64,
}

/// Symbols of the `.symtab` section. An object without one (for example a
/// stripped executable) yields an empty list.
pub fn parse_elf_symbols(data: &[u8]) -> Result<Vec<Symbol>, ElfError> {
    if !is_elf(data) || data.len() < 16 {
        return Err(ElfError::Malformed("elf header"));
    }
    let is64 = match data[4] {
        1 => false,
        2 => true,
        _ => return Err(ElfError::Malformed("elf class")),
    };
    let r = Reader {
        data,
        big_endian: match data[5] {
            1 => false,
            2 => true,
            _ => return Err(ElfError::Malformed("elf byte order")),
        },
    };

    let (shoff, shentsize, mut shnum) = if is64 {
        (r.u64(0x28)?, r.u16(0x3a)?, u32::from(r.u16(0x3c)?))
    } else {
        (u64::from(r.u32(0x20)?), r.u16(0x2e)?, u32::from(r.u16(0x30)?))
    };
    if shoff == 0 {
        return Ok(Vec::new());
    }

    let section = |i: u32| -> Result<Section, ElfError> {
        let base = usize::try_from(shoff).map_err(|_| ElfError::Malformed("section table"))?
            + i as usize * usize::from(shentsize);
        Ok(if is64 {
            Section {
                kind: r.u32(base + 4)?,
                offset: r.u64(base + 0x18)?,
                size: r.u64(base + 0x20)?,
                link: r.u32(base + 0x28)?,
                entsize: r.u64(base + 0x38)?,
            }
        } else {
            Section {
                kind: r.u32(base + 4)?,
                offset: u64::from(r.u32(base + 0x10)?),
                size: u64::from(r.u32(base + 0x14)?),
                link: r.u32(base + 0x18)?,
                entsize: u64::from(r.u32(base + 0x24)?),
            }
        })
    };
    // Extended section numbering keeps the real count in section 0.
    if shnum == 0 {
        shnum = u32::try_from(section(0)?.size).map_err(|_| ElfError::Malformed("section count"))?;
    }

    let mut symbols = Vec::new();
    for i in 0..shnum {
        let sh = section(i)?;
        if sh.kind != SHT_SYMTAB {
            continue;
        }
        let strtab = section(sh.link)?;
        let strtab = r.bytes(strtab.offset as usize, strtab.size as usize)?;
        let strings = Reader {
            data: strtab,
            big_endian: r.big_endian,
        };
        let entsize = if sh.entsize == 0 {
            if is64 { 24 } else { 16 }
        } else {
            sh.entsize as usize
        };
        let count = sh.size as usize / entsize;
        // Entry 0 is the reserved null symbol.
        for n in 1..count {
            let base = sh.offset as usize + n * entsize;
            let (name_off, info, shndx, size) = if is64 {
                (r.u32(base)?, r.u8(base + 4)?, r.u16(base + 6)?, r.u64(base + 16)?)
            } else {
                (r.u32(base)?, r.u8(base + 12)?, r.u16(base + 14)?, u64::from(r.u32(base + 8)?))
            };
            let binding = match info >> 4 {
                0 => SymbolBinding::Local,
                1 => SymbolBinding::Global,
                2 => SymbolBinding::Weak,
                b => SymbolBinding::Other(b),
            };
            let kind = match info & 0xf {
                0 => SymbolType::NoType,
                1 => SymbolType::Object,
                2 => SymbolType::Func,
                3 => SymbolType::Section,
                4 => SymbolType::File,
                5 => SymbolType::Common,
                6 => SymbolType::Tls,
                10 => SymbolType::GnuIfunc,
                t => SymbolType::Other(t),
            };
            symbols.push(Symbol {
                name: strings.cstr(name_off as usize)?.to_owned(),
                binding,
                kind,
                defined: shndx != SHN_UNDEF,
                size,
            });
        }
    }
    Ok(symbols)
}

/// Reads the `.symtab` symbols of an ELF file on disk.
pub fn read_binary_symbols(path: &Path) -> Result<Vec<Symbol>, ElfError> {
    let data = std::fs::read(path)?;
    parse_elf_symbols(&data)
}

#[derive(Debug)]
pub struct ArchiveMember<'a> {
    pub name: String,
    /// Offset of the member header within the archive.
    pub header_offset: usize,
    pub data: &'a [u8],
}

#[derive(Debug)]
pub struct Archive<'a> {
    pub members: Vec<ArchiveMember<'a>>,
    /// `(symbol, member header offset)` pairs from the archive index.
    pub symbol_index: Vec<(String, usize)>,
}

impl<'a> Archive<'a> {
    pub fn parse(data: &'a [u8]) -> Result<Self, ElfError> {
        if data.starts_with(THIN_MAGIC) {
            return Err(ElfError::ThinArchive);
        }
        if !data.starts_with(AR_MAGIC) {
            return Err(ElfError::NotAnArchive);
        }
        let mut pos = AR_MAGIC.len();
        let mut long_names: &[u8] = &[];
        let mut members = Vec::new();
        let mut symbol_index = Vec::new();

        while pos < data.len() {
            // Members are 2-byte aligned; a lone trailing newline is padding.
            if data.len() - pos == 1 && data[pos] == b'\n' {
                break;
            }
            let header = data
                .get(pos..pos + AR_HEADER_LEN)
                .ok_or(ElfError::Malformed("archive member header"))?;
            if &header[58..60] != b"`\n" {
                return Err(ElfError::Malformed("archive member header"));
            }
            let raw_name = std::str::from_utf8(&header[..16])
                .map_err(|_| ElfError::Malformed("archive member name"))?
                .trim_end();
            let size: usize = std::str::from_utf8(&header[48..58])
                .ok()
                .and_then(|s| s.trim().parse().ok())
                .ok_or(ElfError::Malformed("archive member size"))?;
            let body_start = pos + AR_HEADER_LEN;
            let mut body = data
                .get(body_start..body_start + size)
                .ok_or(ElfError::Malformed("archive member body"))?;

            match raw_name {
                "/" | "/SYM64/" => {
                    symbol_index = parse_symbol_index(body, raw_name == "/SYM64/")?;
                }
                "//" => long_names = body,
                "__.SYMDEF" | "__.SYMDEF SORTED" => {}
                _ => {
                    let name = if let Some(len) = raw_name.strip_prefix("#1/") {
                        // BSD: the name precedes the member data.
                        let len: usize = len
                            .parse()
                            .map_err(|_| ElfError::Malformed("archive member name"))?;
                        let (name, rest) = body.split_at(len.min(body.len()));
                        body = rest;
                        String::from_utf8_lossy(name).trim_end_matches('\0').to_owned()
                    } else if let Some(off) = raw_name.strip_prefix('/') {
                        let off: usize = off
                            .parse()
                            .map_err(|_| ElfError::Malformed("archive long name"))?;
                        let tail = long_names
                            .get(off..)
                            .ok_or(ElfError::Malformed("archive long name"))?;
                        let end = tail.iter().position(|&b| b == b'\n').unwrap_or(tail.len());
                        String::from_utf8_lossy(&tail[..end])
                            .trim_end_matches('/')
                            .to_owned()
                    } else {
                        raw_name.trim_end_matches('/').to_owned()
                    };
                    if name == "__.SYMDEF" || name == "__.SYMDEF SORTED" {
                        // BSD ranlib index; its layout is not decoded.
                    } else {
                        members.push(ArchiveMember {
                            name,
                            header_offset: pos,
                            data: body,
                        });
                    }
                }
            }
            pos = body_start + size + (size & 1);
        }

        let archive = Self {
            members,
            symbol_index,
        };
        for (sym, off) in &archive.symbol_index {
            if !archive.members.iter().any(|m| m.header_offset == *off) {
                log::debug!("index entry {sym} points at {off}, which is not a member");
                return Err(ElfError::Malformed("archive symbol index"));
            }
        }
        Ok(archive)
    }
}

fn parse_symbol_index(body: &[u8], wide: bool) -> Result<Vec<(String, usize)>, ElfError> {
    let word = if wide { 8 } else { 4 };
    let read = |off: usize| -> Result<usize, ElfError> {
        let b = body
            .get(off..off + word)
            .ok_or(ElfError::Malformed("archive symbol index"))?;
        Ok(if wide {
            u64::from_be_bytes(b.try_into().expect("len 8")) as usize
        } else {
            u32::from_be_bytes(b.try_into().expect("len 4")) as usize
        })
    };
    let count = read(0)?;
    let names_start = count
        .checked_add(1)
        .and_then(|n| n.checked_mul(word))
        .ok_or(ElfError::Malformed("archive symbol index"))?;
    let mut names = body
        .get(names_start..)
        .ok_or(ElfError::Malformed("archive symbol index"))?
        .split(|&b| b == 0);
    (0..count)
        .map(|i| {
            let offset = read((i + 1) * word)?;
            let name = names
                .next()
                .ok_or(ElfError::Malformed("archive symbol index"))?;
            Ok((String::from_utf8_lossy(name).into_owned(), offset))
        })
        .collect()
}
